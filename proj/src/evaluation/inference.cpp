#include "sseg/evaluation/inference.hpp"

#include <algorithm>
#include <numeric>

#include "sseg/core/errors.hpp"
#include "sseg/core/params.hpp"
#include "sseg/core/random.hpp"
#include "sseg/datasets/png.hpp"
#include "sseg/nn/layers.hpp"

namespace sseg {
namespace {

std::int64_t round_up(std::int64_t v, std::int64_t divisor) { return (v + divisor - 1) / divisor * divisor; }

std::array<std::int64_t, 2> read_pair(Params& p, const std::string& key, std::array<std::int64_t, 2> fallback) {
  if (p.is_null(key)) return fallback;
  const auto& node = p.node().at(key);
  if (node.is_number_integer()) {
    const auto v = node.get<std::int64_t>();
    return {v, v};
  }
  const auto v = p.require<std::vector<std::int64_t>>(key);
  check(v.size() == 2, ErrorCode::ConfigError, "runtime.inference." + key + " needs [h, w]");
  return {v[0], v[1]};
}

class TrainingFlagGuard {
 public:
  explicit TrainingFlagGuard(torch::nn::Module& module) : module_(module), was_training_(module.is_training()) {
    module_.eval();
  }
  ~TrainingFlagGuard() { module_.train(was_training_); }
  TrainingFlagGuard(const TrainingFlagGuard&) = delete;
  TrainingFlagGuard& operator=(const TrainingFlagGuard&) = delete;

 private:
  torch::nn::Module& module_;
  bool was_training_;
};

}  // namespace

InferenceSpec InferenceSpec::parse(const ConfigNode& node, std::int64_t size_divisor) {
  Params p(node, "runtime.inference");
  InferenceSpec spec;
  spec.size_divisor = size_divisor;
  spec.mode = p.get<std::string>("mode", spec.mode);
  check(spec.mode == "whole" || spec.mode == "slide", ErrorCode::ConfigError,
        "runtime.inference.mode must be whole or slide");
  spec.window = read_pair(p, "window", spec.window);
  spec.stride = read_pair(p, "stride", spec.stride);
  p.finish();
  return spec;
}

torch::Tensor infer_logits_whole(SegmentorImpl& model, const torch::Tensor& image, std::int64_t size_divisor,
                                 const torch::Tensor& mask) {
  check(image.dim() == 3, ErrorCode::ShapeError, "inference expects a C×H×W image");
  check(size_divisor >= 1, ErrorCode::ConfigError, "size divisor must be >= 1");
  const auto h = image.size(1);
  const auto w = image.size(2);
  const auto divisor = std::lcm(size_divisor, model.size_divisor());
  const auto ph = round_up(h, divisor) - h;
  const auto pw = round_up(w, divisor) - w;
  auto input = image.unsqueeze(0);
  torch::Tensor gt;
  if (mask.defined()) {
    check(mask.dim() == 2 && mask.size(0) == h && mask.size(1) == w, ErrorCode::ShapeError, "mask must be H×W");
    gt = mask.unsqueeze(0);
  }
  if (ph > 0 || pw > 0) {
    input = torch::constant_pad_nd(input, {0, pw, 0, ph}, 0.0);
    if (gt.defined()) gt = torch::constant_pad_nd(gt, {0, pw, 0, ph}, kDefaultIgnoreIndex);
  }
  torch::NoGradGuard guard;
  const auto logits = model.forward(input, gt).main_logits;
  return logits[0].narrow(1, 0, h).narrow(2, 0, w).to(torch::kFloat);
}

torch::Tensor infer_whole(SegmentorImpl& model, const torch::Tensor& image, std::int64_t size_divisor,
                          const torch::Tensor& mask) {
  return argmax_classes(infer_logits_whole(model, image, size_divisor, mask).unsqueeze(0))[0];
}

std::vector<std::array<std::int64_t, 4>> slide_windows(std::int64_t height, std::int64_t width,
                                                       std::array<std::int64_t, 2> window,
                                                       std::array<std::int64_t, 2> stride) {
  for (int d = 0; d < 2; ++d) {
    check(window[d] >= 1 && stride[d] >= 1, ErrorCode::BadWindow, "window and stride must be positive");
    check(stride[d] <= window[d], ErrorCode::BadWindow,
          "stride " + std::to_string(stride[d]) + " exceeds window " + std::to_string(window[d]));
  }
  check(height >= 1 && width >= 1, ErrorCode::ShapeError, "sliding inference on an empty image");
  auto offsets = [](std::int64_t size, std::int64_t win, std::int64_t step) {
    const auto extent = std::min(win, size);
    std::vector<std::int64_t> out;
    const auto count = size > win ? (size - win + step - 1) / step + 1 : 1;
    for (std::int64_t i = 0; i < count; ++i) out.push_back(std::min(i * step, size - extent));
    return std::pair{out, extent};
  };
  const auto [ys, wh] = offsets(height, window[0], stride[0]);
  const auto [xs, ww] = offsets(width, window[1], stride[1]);
  std::vector<std::array<std::int64_t, 4>> out;
  for (const auto y : ys) {
    for (const auto x : xs) out.push_back({y, x, wh, ww});
  }
  return out;
}

torch::Tensor slide_coverage(std::int64_t height, std::int64_t width, std::array<std::int64_t, 2> window,
                             std::array<std::int64_t, 2> stride) {
  auto count = torch::zeros({height, width}, torch::kLong);
  for (const auto& [y, x, h, w] : slide_windows(height, width, window, stride)) {
    count.narrow(0, y, h).narrow(1, x, w).add_(1);
  }
  return count;
}

torch::Tensor infer_logits_slide(SegmentorImpl& model, const torch::Tensor& image, std::array<std::int64_t, 2> window,
                                 std::array<std::int64_t, 2> stride, std::int64_t size_divisor,
                                 const torch::Tensor& mask) {
  check(image.dim() == 3, ErrorCode::ShapeError, "inference expects a C×H×W image");
  const auto height = image.size(1);
  const auto width = image.size(2);
  const auto windows = slide_windows(height, width, window, stride);
  torch::Tensor sum;
  auto count = torch::zeros({1, height, width}, torch::kFloat);
  for (const auto& [y, x, h, w] : windows) {
    const auto crop = image.narrow(1, y, h).narrow(2, x, w);
    const auto crop_mask = mask.defined() ? mask.narrow(0, y, h).narrow(1, x, w) : torch::Tensor();
    const auto logits = infer_logits_whole(model, crop, size_divisor, crop_mask);
    if (!sum.defined()) sum = torch::zeros({logits.size(0), height, width}, torch::kFloat);
    sum.narrow(1, y, h).narrow(2, x, w).add_(logits);
    count.narrow(1, y, h).narrow(2, x, w).add_(1.0);
  }
  return sum / count;
}

torch::Tensor infer_slide(SegmentorImpl& model, const torch::Tensor& image, std::array<std::int64_t, 2> window,
                          std::array<std::int64_t, 2> stride, std::int64_t size_divisor, const torch::Tensor& mask) {
  return argmax_classes(infer_logits_slide(model, image, window, stride, size_divisor, mask).unsqueeze(0))[0];
}

torch::Tensor infer_logits(SegmentorImpl& model, const torch::Tensor& image, const InferenceSpec& spec,
                           const torch::Tensor& mask) {
  if (spec.mode == "slide") return infer_logits_slide(model, image, spec.window, spec.stride, spec.size_divisor, mask);
  return infer_logits_whole(model, image, spec.size_divisor, mask);
}

Raster colorize(const torch::Tensor& labels, const std::vector<Rgb>& palette) {
  check(labels.dim() == 2, ErrorCode::ShapeError, "colorize expects an H×W label map");
  const auto map = labels.to(torch::kLong).contiguous();
  Raster out(static_cast<int>(map.size(0)), static_cast<int>(map.size(1)), 3);
  const auto* data = map.data_ptr<std::int64_t>();
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const auto label = data[static_cast<std::size_t>(y) * out.width + x];
      if (label < 0 || label >= static_cast<std::int64_t>(palette.size())) continue;
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = palette[label][c];
    }
  }
  return out;
}

ConfusionMatrix evaluate_confusion(SegmentorImpl& model, const SegDataset& dataset, const EvalOptions& options) {
  const auto& desc = dataset.descriptor();
  ConfusionMatrix cm(model.num_classes());
  TrainingFlagGuard eval_mode(model);
  torch::NoGradGuard guard;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    Rng rng = Rng::from({0, i});
    const auto sample = dataset.get(i, rng);
    auto logits = infer_logits(model, sample.image, options.inference, sample.mask);
    const auto& original = sample.meta.original_size;
    const auto raw = dataset.raw(i);
    if (logits.size(1) != raw.mask.size(0) || logits.size(2) != raw.mask.size(1)) {
      logits = resize_bilinear(logits.unsqueeze(0), original[0], original[1])[0];
    }
    const auto pred = argmax_classes(logits.unsqueeze(0))[0];
    cm.update(pred, raw.mask, desc.ignore_index);
    if (options.prediction_dir) {
      const auto id = desc.ids.at(i);
      const auto bytes = pred.clamp(0, 255).to(torch::kUInt8).contiguous();
      Raster index(static_cast<int>(pred.size(0)), static_cast<int>(pred.size(1)), 1);
      std::copy_n(bytes.data_ptr<std::uint8_t>(), index.data.size(), index.data.begin());
      write_png(*options.prediction_dir / "index" / (id + ".png"), index);
      write_png(*options.prediction_dir / "color" / (id + ".png"), colorize(pred, desc.palette));
    }
  }
  return cm;
}

MetricsReport evaluate(SegmentorImpl& model, const SegDataset& dataset, const EvalOptions& options) {
  return compute_metrics(evaluate_confusion(model, dataset, options));
}

}  // namespace sseg
