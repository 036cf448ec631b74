#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sseg/core/config.hpp"
#include "sseg/datasets/sample.hpp"

namespace sseg {

struct LossSpec {
  std::int64_t ignore_index = kDefaultIgnoreIndex;
  std::optional<std::vector<double>> class_weights;
  double aux_weight = 0.4;
  double label_smoothing = 0.0;

  /// Checks the invariants against the class count (ConfigError).
  void validate(std::int64_t num_classes) const;
};

/// Reads the `loss` section: {type: cross_entropy, ignore_index, class_weights, aux_weight,
/// label_smoothing}.
LossSpec parse_loss_spec(const ConfigNode& node);

struct LossValue {
  torch::Tensor loss;    // scalar, differentiable
  double normalizer = 0; // valid pixels (weighted by class weight when configured)
  std::int64_t valid_pixels = 0;
};

/// Per-pixel cross-entropy averaged over non-ignored pixels:
///   loss = Σ_p w[t_p] · ℓ_p / Σ_p w[t_p],   ℓ_p = −(1−ε)·log s_p[t_p] − ε/K · Σ_k log s_p[k]
/// where s_p = softmax(logits_p) and the sums run over pixels whose target is not ignored.
/// Ignored pixels are removed with a select, so their logits receive an exactly zero gradient.
/// An all-ignored target gives loss 0 (still attached to the graph) and normalizer 0.
/// Throws LabelOutOfRange for targets outside {0..K-1} ∪ {ignore_index}.
LossValue cross_entropy(const torch::Tensor& logits, const torch::Tensor& target, const LossSpec& spec);

/// Same terms, but `loss` is the undivided weighted sum. Shards of one logical batch divide
/// their sums by the batch-wide normalizer so their gradients add up to the full-batch one.
LossValue cross_entropy_sum(const torch::Tensor& logits, const torch::Tensor& target, const LossSpec& spec);

struct LossBreakdown {
  torch::Tensor total;
  double main = 0;
  std::vector<double> aux;
};

/// total = main + aux_weight · Σ aux.
LossBreakdown combine_losses(const torch::Tensor& main, const std::vector<torch::Tensor>& aux, double aux_weight);

}  // namespace sseg
