#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "sseg/core/registry.hpp"
#include "sseg/datasets/dataset.hpp"
#include "sseg/datasets/transforms.hpp"

namespace sseg {

inline constexpr std::int64_t kDefaultSizeDivisor = 32;

/// Stacks samples into a batch. Output H and W are the per-batch maxima rounded up to a
/// multiple of `size_divisor`; images are padded bottom/right with `pad_value`, masks with
/// `ignore_index`. Throws EmptyBatch, ShapeError (channel count differs).
Batch collate(const std::vector<SegSample>& samples, double pad_value = 0.0,
              std::int64_t ignore_index = kDefaultIgnoreIndex,
              std::int64_t size_divisor = kDefaultSizeDivisor);

/// A split plus the pipeline applied to every sample drawn from it.
class SegDataset {
 public:
  SegDataset(DatasetDescriptor descriptor, Pipeline pipeline)
      : descriptor_(std::move(descriptor)), pipeline_(std::move(pipeline)) {}

  const DatasetDescriptor& descriptor() const { return descriptor_; }
  std::size_t size() const { return descriptor_.size(); }

  SegSample raw(std::size_t index) const { return load_sample(descriptor_, index); }
  SegSample get(std::size_t index, Rng& rng) const { return pipeline_(raw(index), rng); }

 private:
  DatasetDescriptor descriptor_;
  Pipeline pipeline_;
};

using DatasetPtr = std::shared_ptr<const SegDataset>;

/// Dataset factories keyed by `dataset.type`; the context argument names the split.
/// Built-ins: "folder" (an existing on-disk dataset) and "synthetic" (generated into `root`
/// on first use, then read like "folder").
Registry<DatasetPtr, const std::string&>& dataset_registry();

struct LoaderOptions {
  std::int64_t batch_size = 8;
  bool shuffle = true;
  std::uint64_t seed = 0;
  int num_workers = 0;
  std::int64_t size_divisor = kDefaultSizeDivisor;
  double pad_value = 0.0;
};

/// Iteration-indexed batch source. The batch for iteration t is a pure function of
/// (seed, t): the sample stream is the concatenation of per-epoch permutations, and each
/// sample's augmentation stream is seeded from its stream position. Resuming therefore needs
/// only the iteration counter. With num_workers > 0 samples are prepared concurrently, but the
/// batch is always assembled in stream order.
class DataLoader {
 public:
  DataLoader(DatasetPtr dataset, LoaderOptions options);

  Batch batch_at(std::int64_t iteration) const;
  std::vector<std::size_t> indices_at(std::int64_t iteration) const;
  const LoaderOptions& options() const { return options_; }
  const SegDataset& dataset() const { return *dataset_; }

 private:
  std::vector<std::size_t> permutation(std::int64_t epoch) const;

  DatasetPtr dataset_;
  LoaderOptions options_;
  mutable std::mutex mutex_;
  mutable std::map<std::int64_t, std::vector<std::size_t>> permutations_;
};

}  // namespace sseg
