#pragma once

#include <cstdint>
#include <filesystem>

#include "sseg/datasets/dataset.hpp"

namespace sseg {

struct SyntheticOptions {
  std::uint64_t seed = 0;
  int count = 1;      // samples in the "train" split
  int val_count = 0;  // samples in the "val" split (ids continue after the train ids)
  int height = 64;
  int width = 64;
  int num_classes = 3;
};

/// Shape kinds drawn by the generator; foreground class c uses kind (c - 1) % 5.
enum class ShapeKind { Rectangle, Ellipse, Triangle, Ring, Cross };

ShapeKind shape_kind_for_class(int cls);

/// Writes a dataset of filled shapes over textured background under `out_dir`: every image
/// holds 1 to 5 non-overlapping shapes, each shape's class fixes its kind, and its color is the
/// class hue with per-instance jitter. Output is a pure function of the options: two calls with
/// equal options produce byte-identical trees. Returns the "train" descriptor.
/// Throws InvalidSpec (num_classes < 2, count < 1, tiny canvas) or IOError.
DatasetDescriptor generate_synthetic_dataset(const SyntheticOptions& options,
                                             const std::filesystem::path& out_dir);

}  // namespace sseg
