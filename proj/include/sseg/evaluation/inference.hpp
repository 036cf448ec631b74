#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sseg/core/config.hpp"
#include "sseg/datasets/loader.hpp"
#include "sseg/datasets/png.hpp"
#include "sseg/evaluation/metrics.hpp"
#include "sseg/segmentors/segmentor.hpp"

namespace sseg {

/// `runtime.inference`: {mode: whole|slide, window: [h, w], stride: [h, w]}.
struct InferenceSpec {
  std::string mode = "whole";
  std::array<std::int64_t, 2> window{512, 512};
  std::array<std::int64_t, 2> stride{341, 341};
  std::int64_t size_divisor = kDefaultSizeDivisor;

  static InferenceSpec parse(const ConfigNode& node, std::int64_t size_divisor);
};

/// Single forward pass on a C×H×W image: zero-padded bottom/right to a multiple of
/// `size_divisor`, logits cropped back to H×W. Returns K×H×W logits. `mask` (H×W) is passed
/// through to models that read ground truth and may be undefined otherwise.
torch::Tensor infer_logits_whole(SegmentorImpl& model, const torch::Tensor& image, std::int64_t size_divisor,
                                 const torch::Tensor& mask = {});
/// Per-pixel argmax of infer_logits_whole (ties go to the lowest class).
torch::Tensor infer_whole(SegmentorImpl& model, const torch::Tensor& image, std::int64_t size_divisor,
                          const torch::Tensor& mask = {});

/// Window placements {y, x, h, w} covering an H×W image: offsets step by `stride`, the last
/// window in each direction is clamped to the border, windows larger than the image shrink to
/// it. Throws BadWindow for non-positive sizes or stride > window.
std::vector<std::array<std::int64_t, 4>> slide_windows(std::int64_t height, std::int64_t width,
                                                       std::array<std::int64_t, 2> window,
                                                       std::array<std::int64_t, 2> stride);
/// H×W count of windows covering each pixel.
torch::Tensor slide_coverage(std::int64_t height, std::int64_t width, std::array<std::int64_t, 2> window,
                             std::array<std::int64_t, 2> stride);

/// Sliding-window inference: per-window logits (each window run as in infer_logits_whole) are
/// summed into a buffer and divided by the coverage count. Returns K×H×W logits.
torch::Tensor infer_logits_slide(SegmentorImpl& model, const torch::Tensor& image, std::array<std::int64_t, 2> window,
                                 std::array<std::int64_t, 2> stride, std::int64_t size_divisor,
                                 const torch::Tensor& mask = {});
torch::Tensor infer_slide(SegmentorImpl& model, const torch::Tensor& image, std::array<std::int64_t, 2> window,
                          std::array<std::int64_t, 2> stride, std::int64_t size_divisor, const torch::Tensor& mask = {});

/// Dispatches on spec.mode.
torch::Tensor infer_logits(SegmentorImpl& model, const torch::Tensor& image, const InferenceSpec& spec,
                           const torch::Tensor& mask = {});

struct EvalOptions {
  InferenceSpec inference;
  /// When set, writes index/<id>.png (byte = class) and color/<id>.png (palette RGB) here.
  std::optional<std::filesystem::path> prediction_dir;
};

/// Runs the model in eval mode over the split in index order and accumulates one global
/// confusion matrix against the original-resolution annotations (logits are resized back when
/// the test pipeline changed the size). The model's training flag is restored afterwards.
ConfusionMatrix evaluate_confusion(SegmentorImpl& model, const SegDataset& dataset, const EvalOptions& options);
MetricsReport evaluate(SegmentorImpl& model, const SegDataset& dataset, const EvalOptions& options);

/// Colors an H×W label map with `palette`; labels without a palette entry become black.
Raster colorize(const torch::Tensor& labels, const std::vector<Rgb>& palette);

}  // namespace sseg
