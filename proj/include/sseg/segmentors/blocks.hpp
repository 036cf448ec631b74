#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "sseg/nn/layers.hpp"

namespace sseg {

/// Pyramid pooling: for each bin b, adaptive average pooling to b×b, 1x1 conv C→mid,
/// bilinear upsample back; the branches are concatenated with the input (C + |bins|·mid
/// channels) and fused by a 3x3 conv to `mid` channels.
class PyramidPoolingImpl : public torch::nn::Module {
 public:
  PyramidPoolingImpl(std::int64_t in_channels, std::int64_t mid_channels, std::vector<std::int64_t> bins);

  torch::Tensor forward(const torch::Tensor& x);
  /// Input plus upsampled branches, before the fusion conv.
  torch::Tensor concat(const torch::Tensor& x);
  /// Branch i at its bin resolution (N×mid×b×b), before upsampling.
  torch::Tensor pooled(const torch::Tensor& x, std::size_t i);
  ConvModule branch(std::size_t i) const { return branches_.at(i); }

  std::int64_t concat_channels() const { return in_channels_ + static_cast<std::int64_t>(bins_.size()) * mid_channels_; }
  const std::vector<std::int64_t>& bins() const { return bins_; }

 private:
  std::int64_t in_channels_;
  std::int64_t mid_channels_;
  std::vector<std::int64_t> bins_;
  std::vector<ConvModule> branches_;
  ConvModule fuse_{nullptr};
};
TORCH_MODULE(PyramidPooling);

/// Parallel atrous spatial pyramid pooling: a 1x1 branch, one 3x3 branch per rate with
/// dilation = padding = rate, and optionally an image-level pooling branch; concatenated and
/// fused by a 1x1 conv to `mid` channels.
class AtrousPyramidImpl : public torch::nn::Module {
 public:
  AtrousPyramidImpl(std::int64_t in_channels, std::int64_t mid_channels, std::vector<std::int64_t> rates,
                    bool with_global);

  torch::Tensor forward(const torch::Tensor& x);
  torch::Tensor concat(const torch::Tensor& x);

  std::int64_t concat_channels() const;
  /// The 3x3 branch for rates()[i].
  ConvModule atrous_branch(std::size_t i) const { return atrous_.at(i); }
  /// Image-level branch output before upsampling (N×mid×1×1); requires with_global.
  torch::Tensor global_branch(const torch::Tensor& x);
  const std::vector<std::int64_t>& rates() const { return rates_; }

 private:
  std::int64_t mid_channels_;
  std::vector<std::int64_t> rates_;
  bool with_global_;
  ConvModule pointwise_{nullptr};
  std::vector<ConvModule> atrous_;
  ConvModule image_pool_{nullptr};
  ConvModule fuse_{nullptr};
};
TORCH_MODULE(AtrousPyramid);

/// Deeplabv3+ decoder: low-level features reduced by a 1x1 conv to `low_channels`, concatenated
/// with the bilinearly upsampled context features, fused by two 3x3 convs to `mid` channels.
class PlusDecoderImpl : public torch::nn::Module {
 public:
  PlusDecoderImpl(std::int64_t context_channels, std::int64_t low_level_in, std::int64_t low_channels,
                  std::int64_t mid_channels);

  torch::Tensor forward(const torch::Tensor& context, const torch::Tensor& low_level);
  std::int64_t concat_channels() const { return context_channels_ + low_channels_; }

  ConvModule low_projection{nullptr};

 private:
  std::int64_t context_channels_;
  std::int64_t low_channels_;
  torch::nn::Sequential fuse_{nullptr};
};
TORCH_MODULE(PlusDecoder);

/// UPerNet fusion: PPM on the deepest level, lateral 1x1 convs on the others, top-down
/// upsample-and-add, 3x3 smoothing per level, everything resized to the finest level,
/// concatenated (levels · channels) and fused by a 3x3 conv.
class UPerFusionImpl : public torch::nn::Module {
 public:
  UPerFusionImpl(std::vector<std::int64_t> in_channels, std::int64_t channels, std::vector<std::int64_t> bins);

  torch::Tensor forward(const std::vector<torch::Tensor>& levels);
  std::int64_t concat_channels() const { return channels_ * static_cast<std::int64_t>(in_channels_.size()); }

  /// Lateral projection for level i (i < levels - 1).
  ConvModule lateral(std::size_t i) const { return laterals_.at(i); }

 private:
  std::vector<std::int64_t> in_channels_;
  std::int64_t channels_;
  PyramidPooling ppm_{nullptr};
  std::vector<ConvModule> laterals_;
  std::vector<ConvModule> smooth_;
  ConvModule fuse_{nullptr};
};
TORCH_MODULE(UPerFusion);

}  // namespace sseg
