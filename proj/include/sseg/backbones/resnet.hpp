#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "sseg/backbones/backbone.hpp"
#include "sseg/nn/layers.hpp"

namespace sseg {

struct ResNetOptions {
  int depth = 50;                    // 18, 34, 50 or 101
  std::int64_t output_stride = 8;    // 8, 16 or 32
  std::vector<std::int64_t> out_indices{0, 1, 2, 3};
  double width_multiplier = 1.0;     // scales every channel count ("tiny" presets use 0.25)
  std::vector<int> stage_blocks;     // empty: the depth's standard block counts
  std::int64_t in_channels = 3;
  bool zero_init_residual = false;   // zero the last norm gain of each residual block
};

/// Residual block of ResNet-18/34.
class BasicBlockImpl : public torch::nn::Module {
 public:
  static constexpr std::int64_t kExpansion = 1;
  BasicBlockImpl(std::int64_t in, std::int64_t planes, std::int64_t stride, std::int64_t dilation,
                 bool downsample, bool zero_init_last);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(BasicBlock);

/// Bottleneck block of ResNet-50/101 (stride on the 3x3 convolution).
class BottleneckImpl : public torch::nn::Module {
 public:
  static constexpr std::int64_t kExpansion = 4;
  BottleneckImpl(std::int64_t in, std::int64_t planes, std::int64_t stride, std::int64_t dilation,
                 bool downsample, bool zero_init_last);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr};
  torch::nn::Sequential downsample{nullptr};
};
TORCH_MODULE(Bottleneck);

/// ResNet encoder with stride control: for output stride 16 the last stage keeps its input
/// resolution and uses dilation 2; for output stride 8 stages 3 and 4 do so with dilations 2
/// and 4. Parameter shapes do not depend on the output stride.
class ResNetImpl : public BackboneImpl {
 public:
  explicit ResNetImpl(ResNetOptions options);

  FeaturePyramid forward(const torch::Tensor& images) override;
  std::vector<LevelInfo> levels() const override;

  const ResNetOptions& options() const { return options_; }

 private:
  ResNetOptions options_;
  torch::nn::Conv2d stem_conv{nullptr};
  torch::nn::BatchNorm2d stem_bn{nullptr};
  std::vector<torch::nn::Sequential> stages_;
  std::array<LevelInfo, 4> stage_info_{};
};

}  // namespace sseg
