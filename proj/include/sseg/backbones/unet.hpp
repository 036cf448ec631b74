#pragma once

#include <cstdint>
#include <vector>

#include "sseg/backbones/backbone.hpp"
#include "sseg/nn/layers.hpp"

namespace sseg {

struct UNetOptions {
  std::int64_t base_channels = 64;
  int num_stages = 5;  // encoder stages; num_stages - 1 max-pool downsamplings
  double width_multiplier = 1.0;
  std::int64_t in_channels = 3;
  /// Indices into the decoder outputs ordered by stride: 0 is stride 1 with
  /// round(base_channels * width_multiplier) channels, index i has stride 2^i and 2^i times as
  /// many channels, and index num_stages - 1 is the bottleneck.
  std::vector<std::int64_t> out_indices{0};
};

/// Symmetric encoder-decoder: two conv-norm-relu units per stage, max-pool down, bilinear
/// upsample + conv up, skip concatenation at every scale.
class UNetImpl : public BackboneImpl {
 public:
  explicit UNetImpl(UNetOptions options);

  FeaturePyramid forward(const torch::Tensor& images) override;
  std::vector<LevelInfo> levels() const override;
  std::int64_t size_divisor() const override { return std::int64_t{1} << (options_.num_stages - 1); }

 private:
  UNetOptions options_;
  std::vector<std::int64_t> channels_;
  std::vector<torch::nn::Sequential> encoders_;
  std::vector<ConvModule> up_convs_;
  std::vector<torch::nn::Sequential> decoders_;
};

}  // namespace sseg
