#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace sseg {

inline constexpr std::int64_t kDefaultIgnoreIndex = 255;

struct SampleMeta {
  std::string id;
  std::array<std::int64_t, 2> original_size{0, 0};  // (H0, W0)
  std::array<std::int64_t, 2> current_size{0, 0};   // (H, W)
  /// Top-left corner of the last RandomCrop window, in the coordinates it was cut from.
  std::optional<std::array<std::int64_t, 2>> crop_offset;
  bool flipped = false;
};

/// One record. `image` is float32 C×H×W, `mask` int64 H×W holding class indices or the ignore
/// index. Both always share H and W.
struct SegSample {
  torch::Tensor image;
  torch::Tensor mask;
  SampleMeta meta;
};

/// N samples stacked: images N×C×H×W float32, masks N×H×W int64 (undefined for unlabeled input).
struct Batch {
  torch::Tensor images;
  torch::Tensor masks;
  std::vector<SampleMeta> metas;

  std::int64_t size() const { return images.defined() ? images.size(0) : 0; }
};

}  // namespace sseg
