#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sseg/backbones/backbone.hpp"
#include "sseg/core/params.hpp"
#include "sseg/nn/layers.hpp"
#include "sseg/segmentors/attention.hpp"
#include "sseg/segmentors/blocks.hpp"

namespace sseg {

/// Settings shared by every decode head.
struct HeadOptions {
  std::int64_t num_classes = 0;
  std::int64_t channels = 32;   // width of the decoded feature map
  double dropout = 0.1;         // Dropout2d before the classifier
  std::int64_t in_index = -1;   // pyramid level consumed; negative counts from the end
};

/// A decoder: pyramid features -> `channels`-wide map (`decode`) -> dropout -> 1x1 classifier.
/// Logits are produced at the head's own resolution; the segmentor upsamples them.
class DecodeHeadImpl : public torch::nn::Module {
 public:
  DecodeHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels);

  /// `soft_regions` is consumed only by heads with needs_soft_regions().
  virtual torch::Tensor decode(const FeaturePyramid& features, const torch::Tensor& soft_regions) = 0;
  virtual bool needs_soft_regions() const { return false; }

  torch::Tensor forward(const FeaturePyramid& features, const torch::Tensor& soft_regions = {});
  torch::Tensor classify(const torch::Tensor& decoded);

  const HeadOptions& options() const { return options_; }
  /// Resolves a possibly negative level index against the backbone's levels.
  std::size_t level_index(std::int64_t index) const;
  const LevelInfo& level(std::int64_t index) const { return levels_.at(level_index(index)); }

  torch::nn::Dropout2d dropout{nullptr};
  torch::nn::Conv2d classifier{nullptr};

 protected:
  const torch::Tensor& input(const FeaturePyramid& features, std::int64_t index) const;

 private:
  HeadOptions options_;
  std::vector<LevelInfo> levels_;
};

using HeadPtr = std::shared_ptr<DecodeHeadImpl>;

class FCNHeadImpl : public DecodeHeadImpl {
 public:
  FCNHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels, int num_convs = 2, std::int64_t kernel_size = 3);
  torch::Tensor decode(const FeaturePyramid& features, const torch::Tensor& soft_regions) override;

 private:
  torch::nn::Sequential convs_{nullptr};
};

class PSPHeadImpl : public DecodeHeadImpl {
 public:
  PSPHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels, std::vector<std::int64_t> bins = {1, 2, 3, 6});
  torch::Tensor decode(const FeaturePyramid& features, const torch::Tensor& soft_regions) override;

  PyramidPooling ppm{nullptr};
};

class ASPPHeadImpl : public DecodeHeadImpl {
 public:
  ASPPHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels, std::vector<std::int64_t> rates,
               bool with_global = true);
  torch::Tensor decode(const FeaturePyramid& features, const torch::Tensor& soft_regions) override;

  AtrousPyramid aspp{nullptr};
};

class DeeplabV3PlusHeadImpl : public DecodeHeadImpl {
 public:
  DeeplabV3PlusHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels, std::vector<std::int64_t> rates,
                        std::int64_t low_level_index, std::int64_t low_channels = 48);
  torch::Tensor decode(const FeaturePyramid& features, const torch::Tensor& soft_regions) override;

  AtrousPyramid aspp{nullptr};
  PlusDecoder decoder{nullptr};

 private:
  std::int64_t low_level_index_;
};

class UPerHeadImpl : public DecodeHeadImpl {
 public:
  UPerHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels, std::vector<std::int64_t> bins = {1, 2, 3, 6});
  torch::Tensor decode(const FeaturePyramid& features, const torch::Tensor& soft_regions) override;

  UPerFusion fusion{nullptr};
};

/// conv -> non-local block -> conv, concatenated with the input and fused.
class NLHeadImpl : public DecodeHeadImpl {
 public:
  NLHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels);
  torch::Tensor decode(const FeaturePyramid& features, const torch::Tensor& soft_regions) override;

  NonLocalBlock block{nullptr};

 private:
  ConvModule reduce_{nullptr}, post_{nullptr}, fuse_{nullptr};
};

/// conv -> R shared criss-cross units -> conv, concatenated with the input and fused.
class CCHeadImpl : public DecodeHeadImpl {
 public:
  CCHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels, int recurrence = 2);
  torch::Tensor decode(const FeaturePyramid& features, const torch::Tensor& soft_regions) override;

  CrissCrossAttention attention{nullptr};

 private:
  int recurrence_;
  ConvModule reduce_{nullptr}, post_{nullptr}, fuse_{nullptr};
};

/// 3x3 bottleneck, then object-contextual refinement driven by the auxiliary logits: one
/// region per class, weights softmaxed over space, pooled, attended back to every pixel.
class OCRHeadImpl : public DecodeHeadImpl {
 public:
  OCRHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels, std::int64_t key_channels = 0);
  torch::Tensor decode(const FeaturePyramid& features, const torch::Tensor& soft_regions) override;
  bool needs_soft_regions() const override { return true; }

  /// Regions N×K×C for the bottleneck features and raw soft-region logits.
  torch::Tensor regions(const torch::Tensor& features, const torch::Tensor& soft_regions) const;

  ObjectAttention object_attention{nullptr};

 private:
  ConvModule bottleneck_{nullptr};
};

/// Builds a head of the given catalog type from its remaining parameters. Known types:
/// fcn, pspnet, deeplabv3, deeplabv3plus, upernet, nonlocal, ccnet, ocrnet.
HeadPtr build_head(const std::string& type, Params& params, const std::vector<LevelInfo>& levels,
                   std::int64_t num_classes);
const std::vector<std::string>& head_types();

/// Auxiliary classifier: a one-conv FCN head. `in_index` < 0 selects the default level, the
/// nominal stride-16 stage (index 2) when the pyramid has at least three levels, else the last.
HeadPtr build_aux_head(Params& params, const std::vector<LevelInfo>& levels, std::int64_t num_classes);
std::int64_t default_aux_index(const std::vector<LevelInfo>& levels);

}  // namespace sseg
