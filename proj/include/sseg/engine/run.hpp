#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "sseg/core/config.hpp"
#include "sseg/datasets/loader.hpp"
#include "sseg/evaluation/metrics.hpp"

namespace sseg {

struct TrainOptions {
  std::filesystem::path work_dir;
  std::optional<std::filesystem::path> resume;
  /// Stop (after checkpointing) once this iteration is reached; simulates an interruption.
  std::optional<std::int64_t> stop_at;
  bool quiet = false;
};

struct TrainResult {
  std::int64_t iteration = 0;
  std::optional<MetricsReport> final_metrics;
  double best_miou = -1.0;
  std::filesystem::path last_checkpoint;
};

/// Builds the `split` dataset of the `dataset` section.
DatasetPtr build_dataset(const ConfigNode& config, const std::string& split);

/// Iteration-based training run. Layout of `work_dir`:
///   config.yaml                 snapshot, written before the first step
///   logs/train.jsonl            one record per step plus one per evaluation (no wall times)
///   logs/timing.jsonl           per-step wall time
///   checkpoints/iter_<N>.ckpt   every checkpoint_interval steps and at the end
///   checkpoints/latest.ckpt, checkpoints/best.ckpt
///   metrics.json                final validation report
/// Resuming truncates the logs to the checkpoint's iteration so they continue seamlessly.
TrainResult run_training(const ConfigNode& config, const TrainOptions& options);

}  // namespace sseg
