#pragma once

// End-to-end procedures shared by the unit tests and the acceptance runner. Each returns the
// measured quantity; the caller owns the threshold.

#include <cstdint>
#include <filesystem>
#include <string>

#include "sseg/core/config.hpp"

namespace sseg::testing {

struct OverfitResult {
  double accuracy = 0;  // best pixel accuracy seen
  int steps = 0;        // steps taken when it was first reached (or the budget)
};

/// Trains `head` on one fixed batch of four synthetic images and measures the pixel accuracy
/// (eval mode) after every step, stopping once `target` is reached or after `max_steps`.
OverfitResult overfit_single_batch(const std::string& head, const std::filesystem::path& data_root, int max_steps = 50,
                                   double target = 0.99);

/// Trains `head` for `steps` iterations once with one replica and once with two (contiguous
/// shards of the same batches) and returns the max relative parameter difference.
double data_parallel_divergence(const std::string& head, const std::filesystem::path& data_root, int steps = 10);

/// One step on the same batch in fp32 and fp16; max relative difference of the unscaled
/// averaged gradients.
double fp16_gradient_divergence(const std::filesystem::path& data_root);

struct SkipResult {
  bool skipped = false;
  double scale_before = 0;
  double scale_after = 0;
  bool parameters_unchanged = false;
};

/// An fp16 step with an injected infinite gradient.
SkipResult fp16_injected_overflow(const std::filesystem::path& data_root);

/// Number of scale doublings a fresh loss scaler performs over `steps` consecutive finite steps.
int scaler_doublings(std::int64_t steps);

/// Two deterministic 20-iteration runs in separate directories; true when their metric logs
/// are byte-identical.
bool deterministic_runs_identical(const std::filesystem::path& data_root, const std::filesystem::path& work);

/// A run interrupted at iteration 10 and resumed from its checkpoint against an uninterrupted
/// run: true when the final parameters and the metric logs are bit-identical.
bool resume_matches_uninterrupted(const std::filesystem::path& data_root, const std::filesystem::path& work);

/// Trains `config_file` (a synthetic-benchmark config) with its dataset rooted at `data_root`
/// and returns the final validation mIoU.
double synthetic_benchmark(const std::filesystem::path& config_file, const std::filesystem::path& data_root,
                           const std::filesystem::path& work_dir);

/// Builds the trainer for a full-size config and runs one training step on a random 2×3×64×64
/// batch. Returns the step's loss; throws on failure.
double full_config_one_step(const std::filesystem::path& config_file);

}  // namespace sseg::testing
