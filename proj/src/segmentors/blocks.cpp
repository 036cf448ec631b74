#include "sseg/segmentors/blocks.hpp"

#include "sseg/core/errors.hpp"

namespace sseg {
namespace {

void require_map(const torch::Tensor& x, std::int64_t channels, const char* what) {
  check(x.dim() == 4 && x.size(1) == channels, ErrorCode::ShapeError,
        std::string(what) + " expects N×" + std::to_string(channels) + "×h×w input");
}

}  // namespace

PyramidPoolingImpl::PyramidPoolingImpl(std::int64_t in_channels, std::int64_t mid_channels,
                                       std::vector<std::int64_t> bins)
    : in_channels_(in_channels), mid_channels_(mid_channels), bins_(std::move(bins)) {
  check(!bins_.empty(), ErrorCode::InvalidParams, "pyramid pooling needs at least one bin");
  for (std::size_t i = 0; i < bins_.size(); ++i) {
    check(bins_[i] >= 1, ErrorCode::InvalidParams, "pyramid pooling bins must be >= 1");
    branches_.push_back(register_module("branch" + std::to_string(i),
                                        ConvModule(ConvModuleOptions(in_channels, mid_channels, 1))));
  }
  fuse_ = register_module("fuse", ConvModule(ConvModuleOptions(concat_channels(), mid_channels, 3)));
}

torch::Tensor PyramidPoolingImpl::pooled(const torch::Tensor& x, std::size_t i) {
  const auto bin = bins_.at(i);
  return branches_[i]->forward(torch::adaptive_avg_pool2d(x, {bin, bin}));
}

torch::Tensor PyramidPoolingImpl::concat(const torch::Tensor& x) {
  require_map(x, in_channels_, "pyramid pooling");
  std::vector<torch::Tensor> parts{x};
  for (std::size_t i = 0; i < bins_.size(); ++i) {
    parts.push_back(resize_bilinear(pooled(x, i), x.size(2), x.size(3)));
  }
  return torch::cat(parts, 1);
}

torch::Tensor PyramidPoolingImpl::forward(const torch::Tensor& x) { return fuse_->forward(concat(x)); }

AtrousPyramidImpl::AtrousPyramidImpl(std::int64_t in_channels, std::int64_t mid_channels,
                                     std::vector<std::int64_t> rates, bool with_global)
    : mid_channels_(mid_channels), rates_(std::move(rates)), with_global_(with_global) {
  pointwise_ = register_module("pointwise", ConvModule(ConvModuleOptions(in_channels, mid_channels, 1)));
  for (std::size_t i = 0; i < rates_.size(); ++i) {
    check(rates_[i] >= 1, ErrorCode::InvalidParams, "atrous rates must be >= 1");
    atrous_.push_back(register_module(
        "atrous" + std::to_string(i),
        ConvModule(ConvModuleOptions(in_channels, mid_channels, 3).padding(rates_[i]).dilation(rates_[i]))));
  }
  if (with_global_) {
    image_pool_ = register_module("image_pool", ConvModule(ConvModuleOptions(in_channels, mid_channels, 1)));
  }
  fuse_ = register_module("fuse", ConvModule(ConvModuleOptions(concat_channels(), mid_channels, 1)));
}

std::int64_t AtrousPyramidImpl::concat_channels() const {
  return mid_channels_ * static_cast<std::int64_t>(1 + rates_.size() + (with_global_ ? 1 : 0));
}

torch::Tensor AtrousPyramidImpl::global_branch(const torch::Tensor& x) {
  check(with_global_, ErrorCode::ConfigError, "atrous pyramid built without the image-level branch");
  return image_pool_->forward(x.mean({2, 3}, /*keepdim=*/true));
}

torch::Tensor AtrousPyramidImpl::concat(const torch::Tensor& x) {
  check(x.dim() == 4, ErrorCode::ShapeError, "atrous pyramid expects N×C×h×w input");
  std::vector<torch::Tensor> parts{pointwise_->forward(x)};
  for (auto& branch : atrous_) parts.push_back(branch->forward(x));
  if (with_global_) parts.push_back(resize_bilinear(global_branch(x), x.size(2), x.size(3)));
  return torch::cat(parts, 1);
}

torch::Tensor AtrousPyramidImpl::forward(const torch::Tensor& x) { return fuse_->forward(concat(x)); }

PlusDecoderImpl::PlusDecoderImpl(std::int64_t context_channels, std::int64_t low_level_in,
                                 std::int64_t low_channels, std::int64_t mid_channels)
    : context_channels_(context_channels), low_channels_(low_channels) {
  low_projection = register_module("low_projection", ConvModule(ConvModuleOptions(low_level_in, low_channels, 1)));
  fuse_ = register_module("fuse", torch::nn::Sequential(ConvModule(ConvModuleOptions(concat_channels(), mid_channels, 3)),
                                                       ConvModule(ConvModuleOptions(mid_channels, mid_channels, 3))));
}

torch::Tensor PlusDecoderImpl::forward(const torch::Tensor& context, const torch::Tensor& low_level) {
  require_map(context, context_channels_, "plus decoder context");
  check(low_level.dim() == 4, ErrorCode::ShapeError, "plus decoder expects a N×C×h×w low-level map");
  const auto low = low_projection->forward(low_level);
  const auto up = resize_bilinear(context, low.size(2), low.size(3));
  return fuse_->forward(torch::cat({up, low}, 1));
}

UPerFusionImpl::UPerFusionImpl(std::vector<std::int64_t> in_channels, std::int64_t channels,
                               std::vector<std::int64_t> bins)
    : in_channels_(std::move(in_channels)), channels_(channels) {
  check(in_channels_.size() >= 2, ErrorCode::ConfigError, "UPerNet fusion needs at least two pyramid levels");
  ppm_ = register_module("ppm", PyramidPooling(in_channels_.back(), channels, std::move(bins)));
  for (std::size_t i = 0; i + 1 < in_channels_.size(); ++i) {
    laterals_.push_back(register_module("lateral" + std::to_string(i),
                                        ConvModule(ConvModuleOptions(in_channels_[i], channels, 1))));
    smooth_.push_back(register_module("smooth" + std::to_string(i), ConvModule(ConvModuleOptions(channels, channels, 3))));
  }
  fuse_ = register_module("fuse", ConvModule(ConvModuleOptions(concat_channels(), channels, 3)));
}

torch::Tensor UPerFusionImpl::forward(const std::vector<torch::Tensor>& levels) {
  check(levels.size() == in_channels_.size(), ErrorCode::ShapeError, "UPerNet fusion got the wrong number of levels");
  const auto n = levels.size();
  std::vector<torch::Tensor> lateral(n);
  for (std::size_t i = 0; i + 1 < n; ++i) lateral[i] = laterals_[i]->forward(levels[i]);
  lateral[n - 1] = ppm_->forward(levels[n - 1]);
  for (std::size_t i = n - 1; i > 0; --i) {
    lateral[i - 1] = lateral[i - 1] + resize_bilinear(lateral[i], lateral[i - 1].size(2), lateral[i - 1].size(3));
  }
  const auto h = lateral[0].size(2);
  const auto w = lateral[0].size(3);
  std::vector<torch::Tensor> outs;
  for (std::size_t i = 0; i + 1 < n; ++i) outs.push_back(resize_bilinear(smooth_[i]->forward(lateral[i]), h, w));
  outs.push_back(resize_bilinear(lateral[n - 1], h, w));
  return fuse_->forward(torch::cat(outs, 1));
}

}  // namespace sseg
