#include "sseg/segmentors/attention.hpp"

#include <cmath>
#include <limits>

#include "sseg/core/errors.hpp"

namespace sseg {
namespace {

torch::nn::Conv2d pointwise(std::int64_t in, std::int64_t out) {
  torch::nn::Conv2d conv(torch::nn::Conv2dOptions(in, out, 1));
  init_conv_fan_out(*conv);
  return conv;
}

}  // namespace

NonLocalBlockImpl::NonLocalBlockImpl(std::int64_t channels, std::int64_t inner_channels, bool zero_init_output)
    : channels_(channels), inner_(inner_channels > 0 ? inner_channels : std::max<std::int64_t>(1, channels / 2)) {
  theta = register_module("theta", pointwise(channels, inner_));
  phi = register_module("phi", pointwise(channels, inner_));
  g = register_module("g", pointwise(channels, inner_));
  output = register_module("output", pointwise(inner_, channels));
  if (zero_init_output) {
    torch::NoGradGuard guard;
    output->weight.zero_();
    output->bias.zero_();
  }
}

torch::Tensor NonLocalBlockImpl::forward(const torch::Tensor& x) {
  check(x.dim() == 4 && x.size(1) == channels_, ErrorCode::ShapeError,
        "non-local block expects N×" + std::to_string(channels_) + "×h×w input");
  const auto n = x.size(0);
  const auto h = x.size(2);
  const auto w = x.size(3);
  const auto queries = theta->forward(x).view({n, inner_, h * w}).transpose(1, 2);  // N×P×c
  const auto keys = phi->forward(x).view({n, inner_, h * w});                        // N×c×P
  const auto values = g->forward(x).view({n, inner_, h * w}).transpose(1, 2);       // N×P×c
  const auto weights = torch::softmax(torch::bmm(queries, keys) / std::sqrt(static_cast<double>(inner_)), -1);
  const auto context = torch::bmm(weights, values).transpose(1, 2).reshape({n, inner_, h, w});
  return x + output->forward(context);
}

CrissCrossAttentionImpl::CrissCrossAttentionImpl(std::int64_t channels) {
  const auto qk = std::max<std::int64_t>(1, channels / 8);
  query = register_module("query", pointwise(channels, qk));
  key = register_module("key", pointwise(channels, qk));
  value = register_module("value", pointwise(channels, channels));
  gamma = register_parameter("gamma", torch::zeros({1}));
}

torch::Tensor CrissCrossAttentionImpl::forward(const torch::Tensor& x) {
  check(x.dim() == 4 && x.size(1) == value->options.in_channels(), ErrorCode::ShapeError,
        "criss-cross attention expects N×" + std::to_string(value->options.in_channels()) + "×h×w input");
  const auto h = x.size(2);
  const auto w = x.size(3);
  const auto q = query->forward(x);
  const auto k = key->forward(x);
  const auto v = value->forward(x);
  // Column keys (u, j) for query (i, j); the query position itself is excluded here and
  // counted once through the row term.
  auto energy_col = torch::einsum("ncij,ncuj->niju", {q, k});
  const auto self = torch::eye(h, x.options().dtype(torch::kBool)).view({1, h, 1, h});
  energy_col = energy_col.masked_fill(self, -std::numeric_limits<double>::infinity());
  const auto energy_row = torch::einsum("ncij,nciv->nijv", {q, k});
  const auto attn = torch::softmax(torch::cat({energy_col, energy_row}, -1), -1);
  const auto attn_col = attn.narrow(-1, 0, h);
  const auto attn_row = attn.narrow(-1, h, w);
  const auto out = torch::einsum("niju,ncuj->ncij", {attn_col, v}) + torch::einsum("nijv,nciv->ncij", {attn_row, v});
  return x + gamma.to(x.scalar_type()) * out;
}

torch::Tensor region_pool(const torch::Tensor& features, const torch::Tensor& region_weights) {
  check(features.dim() == 4 && region_weights.dim() == 4, ErrorCode::ShapeError, "region pooling expects 4-d maps");
  check(features.size(0) == region_weights.size(0) && features.size(2) == region_weights.size(2) &&
            features.size(3) == region_weights.size(3),
        ErrorCode::ShapeError, "region weights must match the feature map's batch and spatial size");
  const auto n = features.size(0);
  const auto c = features.size(1);
  const auto k = region_weights.size(1);
  auto weights = region_weights.reshape({n, k, -1});
  weights = weights / weights.sum(-1, /*keepdim=*/true).clamp_min(1e-12);
  return torch::bmm(weights, features.reshape({n, c, -1}).transpose(1, 2));  // N×K×C
}

ObjectAttentionImpl::ObjectAttentionImpl(std::int64_t channels, std::int64_t key_channels, std::int64_t out_channels)
    : key_channels_(key_channels) {
  query_ = register_module("query", torch::nn::Sequential(ConvModule(ConvModuleOptions(channels, key_channels, 1)),
                                                        ConvModule(ConvModuleOptions(key_channels, key_channels, 1))));
  key_ = register_module("key", torch::nn::Sequential(ConvModule(ConvModuleOptions(channels, key_channels, 1)),
                                                    ConvModule(ConvModuleOptions(key_channels, key_channels, 1))));
  value_ = register_module("value", ConvModule(ConvModuleOptions(channels, key_channels, 1)));
  up_ = register_module("up", ConvModule(ConvModuleOptions(key_channels, channels, 1)));
  fuse_ = register_module("fuse", ConvModule(ConvModuleOptions(2 * channels, out_channels, 1)));
}

torch::Tensor ObjectAttentionImpl::project_regions(torch::nn::Sequential& proj, const torch::Tensor& regions) {
  // Regions are handled as an N×C×K×1 map so the same conv units apply.
  return proj->forward(regions.transpose(1, 2).unsqueeze(-1)).squeeze(-1);  // N×key×K
}

torch::Tensor ObjectAttentionImpl::attention(const torch::Tensor& features, const torch::Tensor& regions) {
  const auto n = features.size(0);
  const auto q = query_->forward(features).reshape({n, key_channels_, -1}).transpose(1, 2);  // N×P×key
  const auto k = project_regions(key_, regions);                                            // N×key×K
  return torch::softmax(torch::bmm(q, k) / std::sqrt(static_cast<double>(key_channels_)), -1);
}

torch::Tensor ObjectAttentionImpl::forward(const torch::Tensor& features, const torch::Tensor& regions) {
  check(features.dim() == 4 && regions.dim() == 3 && regions.size(2) == features.size(1), ErrorCode::ShapeError,
        "object attention expects N×C×h×w features and N×K×C regions");
  const auto n = features.size(0);
  const auto h = features.size(2);
  const auto w = features.size(3);
  const auto weights = attention(features, regions);                                           // N×P×K
  const auto v = value_->forward(regions.transpose(1, 2).unsqueeze(-1)).squeeze(-1);           // N×key×K
  const auto context = torch::bmm(weights, v.transpose(1, 2)).transpose(1, 2).reshape({n, key_channels_, h, w});
  return fuse_->forward(torch::cat({up_->forward(context), features}, 1));
}

}  // namespace sseg
