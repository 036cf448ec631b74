#include "sseg/backbones/resnet.hpp"

#include <algorithm>
#include <cmath>

#include "sseg/core/errors.hpp"

namespace sseg {
namespace {

torch::nn::Conv2d conv3x3(std::int64_t in, std::int64_t out, std::int64_t stride, std::int64_t dilation) {
  torch::nn::Conv2d conv(
      torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(dilation).dilation(dilation).bias(false));
  init_conv_fan_out(*conv);
  return conv;
}

torch::nn::Conv2d conv1x1(std::int64_t in, std::int64_t out, std::int64_t stride = 1) {
  torch::nn::Conv2d conv(torch::nn::Conv2dOptions(in, out, 1).stride(stride).bias(false));
  init_conv_fan_out(*conv);
  return conv;
}

torch::nn::BatchNorm2d norm(std::int64_t channels, bool zero_gain = false) {
  torch::nn::BatchNorm2d bn(channels);
  init_norm(*bn);
  if (zero_gain) {
    torch::NoGradGuard guard;
    bn->weight.zero_();
  }
  return bn;
}

torch::nn::Sequential make_downsample(std::int64_t in, std::int64_t out, std::int64_t stride) {
  return torch::nn::Sequential(conv1x1(in, out, stride), norm(out));
}

}  // namespace

BasicBlockImpl::BasicBlockImpl(std::int64_t in, std::int64_t planes, std::int64_t stride,
                               std::int64_t dilation, bool with_downsample, bool zero_init_last) {
  conv1 = register_module("conv1", conv3x3(in, planes, stride, dilation));
  bn1 = register_module("bn1", norm(planes));
  conv2 = register_module("conv2", conv3x3(planes, planes, 1, dilation));
  bn2 = register_module("bn2", norm(planes, zero_init_last));
  if (with_downsample) downsample = register_module("downsample", make_downsample(in, planes, stride));
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1->forward(conv1->forward(x)));
  out = bn2->forward(conv2->forward(out));
  const auto identity = downsample ? downsample->forward(x) : x;
  return torch::relu(out + identity);
}

BottleneckImpl::BottleneckImpl(std::int64_t in, std::int64_t planes, std::int64_t stride,
                               std::int64_t dilation, bool with_downsample, bool zero_init_last) {
  conv1 = register_module("conv1", conv1x1(in, planes));
  bn1 = register_module("bn1", norm(planes));
  conv2 = register_module("conv2", conv3x3(planes, planes, stride, dilation));
  bn2 = register_module("bn2", norm(planes));
  conv3 = register_module("conv3", conv1x1(planes, planes * kExpansion));
  bn3 = register_module("bn3", norm(planes * kExpansion, zero_init_last));
  if (with_downsample) {
    downsample = register_module("downsample", make_downsample(in, planes * kExpansion, stride));
  }
}

torch::Tensor BottleneckImpl::forward(const torch::Tensor& x) {
  auto out = torch::relu(bn1->forward(conv1->forward(x)));
  out = torch::relu(bn2->forward(conv2->forward(out)));
  out = bn3->forward(conv3->forward(out));
  const auto identity = downsample ? downsample->forward(x) : x;
  return torch::relu(out + identity);
}

ResNetImpl::ResNetImpl(ResNetOptions options) : options_(std::move(options)) {
  const auto& o = options_;
  std::vector<int> blocks;
  bool bottleneck = false;
  switch (o.depth) {
    case 18: blocks = {2, 2, 2, 2}; break;
    case 34: blocks = {3, 4, 6, 3}; break;
    case 50: blocks = {3, 4, 6, 3}; bottleneck = true; break;
    case 101: blocks = {3, 4, 23, 3}; bottleneck = true; break;
    default: fail(ErrorCode::InvalidSpec, "resnet depth must be 18, 34, 50 or 101, got " + std::to_string(o.depth));
  }
  if (!o.stage_blocks.empty()) {
    check(o.stage_blocks.size() == 4, ErrorCode::InvalidSpec, "resnet stage_blocks needs 4 entries");
    for (int b : o.stage_blocks) check(b >= 1, ErrorCode::InvalidSpec, "resnet stage_blocks must be >= 1");
    blocks = o.stage_blocks;
  }
  check(o.output_stride == 8 || o.output_stride == 16 || o.output_stride == 32, ErrorCode::InvalidSpec,
        "output_stride must be 8, 16 or 32");
  check(o.width_multiplier > 0, ErrorCode::InvalidSpec, "width_multiplier must be positive");
  check(!o.out_indices.empty(), ErrorCode::InvalidSpec, "out_indices must not be empty");
  for (std::size_t i = 0; i < o.out_indices.size(); ++i) {
    check(o.out_indices[i] >= 0 && o.out_indices[i] < 4, ErrorCode::InvalidSpec,
          "resnet out_indices must lie in [0, 3]");
    check(i == 0 || o.out_indices[i] > o.out_indices[i - 1], ErrorCode::InvalidSpec,
          "resnet out_indices must be strictly increasing");
  }

  auto scaled = [&](std::int64_t c) {
    return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::lround(c * o.width_multiplier)));
  };
  const auto stem = scaled(64);
  stem_conv = register_module(
      "stem_conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(o.in_channels, stem, 7).stride(2).padding(3).bias(false)));
  init_conv_fan_out(*stem_conv);
  stem_bn = register_module("stem_bn", norm(stem));

  // Nominal strides per stage are 1,2,2,2; dilated stages trade stride for dilation.
  const std::array<std::int64_t, 4> nominal{1, 2, 2, 2};
  std::array<std::int64_t, 4> stride = nominal;
  std::array<std::int64_t, 4> dilation{1, 1, 1, 1};
  if (o.output_stride <= 16) { stride[3] = 1; dilation[3] = 2; }
  if (o.output_stride == 8) { stride[2] = 1; dilation[2] = 2; dilation[3] = 4; }

  const std::int64_t expansion = bottleneck ? BottleneckImpl::kExpansion : BasicBlockImpl::kExpansion;
  std::int64_t in = stem;
  std::int64_t running_stride = 4;
  for (int s = 0; s < 4; ++s) {
    const auto planes = scaled(64 << s);
    torch::nn::Sequential stage;
    for (int b = 0; b < blocks[s]; ++b) {
      const bool first = b == 0;
      const bool down = first && (nominal[s] != 1 || in != planes * expansion);
      const auto block_stride = first ? stride[s] : 1;
      if (bottleneck) {
        stage->push_back(Bottleneck(in, planes, block_stride, dilation[s], down, o.zero_init_residual));
      } else {
        stage->push_back(BasicBlock(in, planes, block_stride, dilation[s], down, o.zero_init_residual));
      }
      in = planes * expansion;
    }
    running_stride *= stride[s];
    stage_info_[s] = LevelInfo{running_stride, in};
    stages_.push_back(register_module("layer" + std::to_string(s + 1), stage));
  }
}

FeaturePyramid ResNetImpl::forward(const torch::Tensor& images) {
  check(images.dim() == 4 && images.size(1) == options_.in_channels, ErrorCode::ShapeError,
        "resnet expects N×" + std::to_string(options_.in_channels) + "×H×W input");
  auto x = torch::relu(stem_bn->forward(stem_conv->forward(images)));
  x = torch::max_pool2d(x, 3, 2, 1);
  FeaturePyramid pyramid;
  std::size_t next = 0;
  for (int s = 0; s < 4 && next < options_.out_indices.size(); ++s) {
    x = stages_[s]->forward(x);
    if (options_.out_indices[next] == s) {
      pyramid.levels.push_back({stage_info_[s].stride, stage_info_[s].channels, x});
      ++next;
    }
  }
  return pyramid;
}

std::vector<LevelInfo> ResNetImpl::levels() const {
  std::vector<LevelInfo> out;
  for (auto i : options_.out_indices) out.push_back(stage_info_[i]);
  return out;
}

}  // namespace sseg
