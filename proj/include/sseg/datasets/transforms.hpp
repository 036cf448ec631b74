#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sseg/core/config.hpp"
#include "sseg/core/random.hpp"
#include "sseg/core/registry.hpp"
#include "sseg/datasets/sample.hpp"

namespace sseg {

/// A per-sample preprocessing step. Geometric steps move image and mask with the same spatial
/// map; the mask is only ever resampled nearest-neighbor. Random steps draw from the stream
/// they are handed and nothing else.
class Transform {
 public:
  virtual ~Transform() = default;
  virtual SegSample apply(SegSample sample, Rng& rng) const = 0;
};

using TransformPtr = std::shared_ptr<const Transform>;

/// Rescales to `target` (H, W). With keep_ratio the largest scale that fits inside the target
/// is used, e.g. 100x50 into (64, 64) gives 64x32. With ratio_range the target is first
/// multiplied by a factor drawn uniformly from the range (random rescale augmentation).
class Resize final : public Transform {
 public:
  Resize(std::array<std::int64_t, 2> target, bool keep_ratio,
         std::optional<std::array<double, 2>> ratio_range = std::nullopt);
  SegSample apply(SegSample sample, Rng& rng) const override;

  /// Output size for an input of `size` under scale factor `ratio` (no randomness).
  std::array<std::int64_t, 2> output_size(std::array<std::int64_t, 2> size, double ratio = 1.0) const;

 private:
  std::array<std::int64_t, 2> target_;
  bool keep_ratio_;
  std::optional<std::array<double, 2>> ratio_range_;
};

/// Cuts a `size` window at a random offset (clamped to the sample when smaller). If a single
/// category covers more than max_category_ratio of the window's labeled pixels, the window is
/// redrawn, at most 10 times, and the last draw is kept. The offset is recorded in meta.
class RandomCrop final : public Transform {
 public:
  static constexpr int kMaxRedraws = 10;

  RandomCrop(std::array<std::int64_t, 2> size, double max_category_ratio = 0.75,
             std::int64_t ignore_index = kDefaultIgnoreIndex);
  SegSample apply(SegSample sample, Rng& rng) const override;

 private:
  std::array<std::int64_t, 2> size_;
  double max_category_ratio_;
  std::int64_t ignore_index_;
};

/// Horizontal flip with probability `prob`.
class RandomFlip final : public Transform {
 public:
  explicit RandomFlip(double prob = 0.5);
  SegSample apply(SegSample sample, Rng& rng) const override;

 private:
  double prob_;
};

/// (x - mean) / std per channel, image only.
class Normalize final : public Transform {
 public:
  Normalize(std::vector<double> mean, std::vector<double> std);
  SegSample apply(SegSample sample, Rng& rng) const override;

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
};

/// Pads bottom/right up to `size`; image with pad_value, mask with seg_pad_value.
class Pad final : public Transform {
 public:
  Pad(std::array<std::int64_t, 2> size, double pad_value = 0.0,
      std::int64_t seg_pad_value = kDefaultIgnoreIndex);
  SegSample apply(SegSample sample, Rng& rng) const override;

 private:
  std::array<std::int64_t, 2> size_;
  double pad_value_;
  std::int64_t seg_pad_value_;
};

/// Ordered list of transforms built from a config list of `{type: ..., ...}` mappings.
class Pipeline {
 public:
  Pipeline() = default;
  explicit Pipeline(std::vector<TransformPtr> steps) : steps_(std::move(steps)) {}

  /// Throws BadPipeline for unknown transform names or invalid parameters.
  static Pipeline build(const ConfigNode& list);

  SegSample operator()(SegSample sample, Rng& rng) const;
  std::size_t size() const { return steps_.size(); }

 private:
  std::vector<TransformPtr> steps_;
};

Registry<TransformPtr>& transform_registry();

SegSample apply_pipeline(SegSample sample, const ConfigNode& pipeline, Rng& rng);

/// Nearest-neighbor resampling of an H×W label map (source index floor((dst + 0.5) * in / out)).
torch::Tensor resize_mask_nearest(const torch::Tensor& mask, std::int64_t height, std::int64_t width);

}  // namespace sseg
