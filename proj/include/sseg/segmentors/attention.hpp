#pragma once

#include <cstdint>

#include <torch/torch.h>

#include "sseg/nn/layers.hpp"

namespace sseg {

/// Embedded-Gaussian non-local block:
///   y = x + W_z · softmax((θx)(φx)ᵀ / sqrt(inner)) · (g x)
/// with the softmax over key positions for every query position. θ, φ, g are 1x1 convs to
/// `inner` channels (default C/2, at least 1) and W_z a 1x1 conv back to C, zero-initialized
/// by default so a fresh block is the identity.
class NonLocalBlockImpl : public torch::nn::Module {
 public:
  explicit NonLocalBlockImpl(std::int64_t channels, std::int64_t inner_channels = 0, bool zero_init_output = true);

  torch::Tensor forward(const torch::Tensor& x);
  std::int64_t inner_channels() const { return inner_; }

  torch::nn::Conv2d theta{nullptr}, phi{nullptr}, g{nullptr}, output{nullptr};

 private:
  std::int64_t channels_;
  std::int64_t inner_;
};
TORCH_MODULE(NonLocalBlock);

/// One criss-cross attention unit. Each position (i, j) attends over the h + w − 1 positions
/// sharing its row or column (itself once):
///   out(i,j) = x(i,j) + γ · Σ_{p ∈ row ∪ col} softmax_p(q(i,j)·k(p)) · v(p)
/// q and k use max(1, C/8) channels, v keeps C; γ is a learnable scalar initialized to 0.
/// Applying the unit twice (the recurrent form) propagates information across the whole map.
class CrissCrossAttentionImpl : public torch::nn::Module {
 public:
  explicit CrissCrossAttentionImpl(std::int64_t channels);

  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d query{nullptr}, key{nullptr}, value{nullptr};
  torch::Tensor gamma;
};
TORCH_MODULE(CrissCrossAttention);

/// Object region representations: each class map of `region_weights` (N×K×h×w, non-negative)
/// is normalized to sum to one over space and used to average the pixel features, giving
/// N×K×C. A one-hot partition therefore yields the mean feature of each part.
torch::Tensor region_pool(const torch::Tensor& features, const torch::Tensor& region_weights);

/// Pixel-region relation: queries from pixels, keys and values from the K region vectors,
/// softmax over K, the resulting context projected back to C, concatenated with the pixel
/// features and fused by a 1x1 conv to `out_channels`.
class ObjectAttentionImpl : public torch::nn::Module {
 public:
  ObjectAttentionImpl(std::int64_t channels, std::int64_t key_channels, std::int64_t out_channels);

  /// features N×C×h×w, regions N×K×C -> N×out×h×w
  torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& regions);
  /// The N×(h·w)×K attention weights for the given inputs.
  torch::Tensor attention(const torch::Tensor& features, const torch::Tensor& regions);

 private:
  torch::Tensor project_regions(torch::nn::Sequential& proj, const torch::Tensor& regions);

  std::int64_t key_channels_;
  torch::nn::Sequential query_{nullptr}, key_{nullptr};
  ConvModule value_{nullptr}, up_{nullptr}, fuse_{nullptr};
};
TORCH_MODULE(ObjectAttention);

}  // namespace sseg
