#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sseg/core/registry.hpp"

namespace sseg {

/// Static description of one emitted feature level.
struct LevelInfo {
  std::int64_t stride = 1;
  std::int64_t channels = 0;
};

struct FeatureLevel {
  std::int64_t stride = 1;
  std::int64_t channels = 0;
  torch::Tensor map;  // N×C×H×W, H == ceil(H_in / stride)
};

/// Ordered feature maps from a backbone. Strides never decrease along the list; dilated stages
/// repeat the previous stride (a ResNet at output stride 8 emits strides 4, 8, 8, 8).
struct FeaturePyramid {
  std::vector<FeatureLevel> levels;

  const FeatureLevel& at(std::size_t index) const { return levels.at(index); }
  std::size_t size() const { return levels.size(); }
};

/// Encoder network. `levels()` describes what `forward` emits, in order, so heads can validate
/// their inputs at construction time.
class BackboneImpl : public torch::nn::Module {
 public:
  virtual FeaturePyramid forward(const torch::Tensor& images) = 0;
  virtual std::vector<LevelInfo> levels() const = 0;
  /// Input sides must be multiples of this.
  virtual std::int64_t size_divisor() const { return 32; }
};

using BackbonePtr = std::shared_ptr<BackboneImpl>;

/// Built-ins: "resnet" and "unet".
Registry<BackbonePtr>& backbone_registry();

inline BackbonePtr build_backbone(const ConfigNode& spec) { return backbone_registry().build(spec); }

/// Loads name-keyed arrays from an archive file into the backbone's parameters and buffers.
/// `prefix` is stripped from archive names first. Names absent from the archive keep their
/// initialization; a shape disagreement throws ShapeMismatch. Returns the number loaded.
std::size_t load_pretrained(torch::nn::Module& module, const std::string& path, const std::string& prefix = "");

}  // namespace sseg
