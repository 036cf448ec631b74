#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sseg/datasets/sample.hpp"

namespace sseg {

using Rgb = std::array<std::uint8_t, 3>;

/// One split of an on-disk dataset.
///
/// Layout under `root`:
///   meta.json                 descriptor (see save_dataset_meta)
///   images/<id>.png           RGB image
///   annotations/<id>.png      single-channel 8-bit index PNG (byte = class index or ignore)
struct DatasetDescriptor {
  std::filesystem::path root;
  std::string split;
  int num_classes = 0;
  std::int64_t ignore_index = kDefaultIgnoreIndex;
  std::vector<Rgb> palette;
  std::vector<std::string> class_names;
  std::vector<std::string> ids;
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> std{0.5, 0.5, 0.5};

  std::size_t size() const { return ids.size(); }

  /// Throws InvalidSpec when the palette/class list lengths or ignore index are inconsistent.
  void validate() const;
};

/// Everything meta.json stores; one DatasetMeta describes all splits.
struct DatasetMeta {
  int num_classes = 0;
  std::int64_t ignore_index = kDefaultIgnoreIndex;
  std::vector<Rgb> palette;
  std::vector<std::string> class_names;
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> std{0.5, 0.5, 0.5};
  std::vector<std::pair<std::string, std::vector<std::string>>> splits;
};

void save_dataset_meta(const std::filesystem::path& root, const DatasetMeta& meta);
DatasetDescriptor load_descriptor(const std::filesystem::path& root, const std::string& split);

/// Decodes sample `index`: image as float in [0,1] (not yet normalized), mask as raw indices.
/// Throws IndexOutOfRange, CorruptSample (size mismatch, unreadable file, illegal label).
SegSample load_sample(const DatasetDescriptor& descriptor, std::size_t index);

}  // namespace sseg
