#include "sseg/backbones/unet.hpp"

#include <cmath>

#include "sseg/core/errors.hpp"

namespace sseg {
namespace {

torch::nn::Sequential double_conv(std::int64_t in, std::int64_t out) {
  return torch::nn::Sequential(ConvModule(ConvModuleOptions(in, out, 3)), ConvModule(ConvModuleOptions(out, out, 3)));
}

}  // namespace

UNetImpl::UNetImpl(UNetOptions options) : options_(std::move(options)) {
  const auto& o = options_;
  check(o.num_stages >= 2 && o.num_stages <= 6, ErrorCode::InvalidSpec, "unet num_stages must be in [2, 6]");
  check(o.base_channels >= 1 && o.width_multiplier > 0, ErrorCode::InvalidSpec, "unet channels must be positive");
  check(!o.out_indices.empty(), ErrorCode::InvalidSpec, "out_indices must not be empty");
  for (std::size_t i = 0; i < o.out_indices.size(); ++i) {
    check(o.out_indices[i] >= 0 && o.out_indices[i] < o.num_stages, ErrorCode::InvalidSpec,
          "unet out_indices must lie in [0, num_stages)");
    check(i == 0 || o.out_indices[i] > o.out_indices[i - 1], ErrorCode::InvalidSpec,
          "unet out_indices must be strictly increasing");
  }
  const auto base = std::max<std::int64_t>(1, std::lround(o.base_channels * o.width_multiplier));
  for (int s = 0; s < o.num_stages; ++s) channels_.push_back(base << s);

  std::int64_t in = o.in_channels;
  for (int s = 0; s < o.num_stages; ++s) {
    encoders_.push_back(register_module("encoder" + std::to_string(s), double_conv(in, channels_[s])));
    in = channels_[s];
  }
  // decoder s fuses the upsampled level s+1 with encoder skip s.
  for (int s = 0; s + 1 < o.num_stages; ++s) {
    up_convs_.push_back(register_module("up_conv" + std::to_string(s),
                                        ConvModule(ConvModuleOptions(channels_[s + 1], channels_[s], 3))));
    decoders_.push_back(register_module("decoder" + std::to_string(s), double_conv(2 * channels_[s], channels_[s])));
  }
}

FeaturePyramid UNetImpl::forward(const torch::Tensor& images) {
  check(images.dim() == 4 && images.size(1) == options_.in_channels, ErrorCode::ShapeError,
        "unet expects N×" + std::to_string(options_.in_channels) + "×H×W input");
  const auto divisor = size_divisor();
  check(images.size(2) % divisor == 0 && images.size(3) % divisor == 0, ErrorCode::ShapeError,
        "unet input sides must be multiples of " + std::to_string(divisor));
  const int stages = options_.num_stages;
  std::vector<torch::Tensor> skips;
  auto x = images;
  for (int s = 0; s < stages; ++s) {
    if (s > 0) x = torch::max_pool2d(x, 2, 2);
    x = encoders_[s]->forward(x);
    skips.push_back(x);
  }
  std::vector<torch::Tensor> decoded(stages);
  decoded[stages - 1] = x;
  for (int s = stages - 2; s >= 0; --s) {
    auto up = resize_bilinear(decoded[s + 1], skips[s].size(2), skips[s].size(3));
    up = up_convs_[s]->forward(up);
    decoded[s] = decoders_[s]->forward(torch::cat({skips[s], up}, 1));
  }
  FeaturePyramid pyramid;
  for (auto i : options_.out_indices) {
    pyramid.levels.push_back({std::int64_t{1} << i, channels_[i], decoded[i]});
  }
  return pyramid;
}

std::vector<LevelInfo> UNetImpl::levels() const {
  std::vector<LevelInfo> out;
  for (auto i : options_.out_indices) out.push_back({std::int64_t{1} << i, channels_[i]});
  return out;
}

}  // namespace sseg
