#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "sseg/core/config.hpp"

namespace sseg {

struct GroupMultipliers {
  double lr_mult = 1.0;
  double weight_decay_mult = 1.0;
};

/// Reads the `optimizer` section:
///   {type: sgd|adamw, base_lr, momentum, weight_decay, betas: [b1, b2], eps,
///    groups: {backbone|head|norm|bias: {lr_mult, weight_decay_mult}}}
struct OptimizerSpec {
  std::string type = "sgd";
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Keyed by selector. Norm and bias default to weight_decay_mult 0.
  std::map<std::string, GroupMultipliers> groups;
};

OptimizerSpec parse_optimizer_spec(const ConfigNode& node);

/// Trainable parameters sharing one resolved (lr_mult, weight_decay_mult) pair.
///
/// Every parameter is classified along two axes: the owning part (`backbone.` prefix ->
/// backbone; `decode_head.` or `aux_head.` -> head) and its kind (inside a normalization layer
/// -> norm; otherwise a `bias` -> bias; otherwise weight). Its multipliers are the product of
/// the part's and the kind's selector multipliers, weight kinds contributing 1.
struct ParamGroup {
  std::string name;  // "<part>.<kind>"
  double lr_mult = 1.0;
  double weight_decay_mult = 1.0;
  std::vector<std::string> names;
  std::vector<torch::Tensor> params;
};

/// Throws ConfigError when a trainable parameter belongs to neither part.
std::vector<ParamGroup> resolve_param_groups(torch::nn::Module& model, const OptimizerSpec& spec);

/// Gradient-based update over resolved parameter groups. `step(lr)` applies one update with
/// base rate `lr` (scaled per group by lr_mult) using the gradients currently stored in the
/// parameters; parameters without a gradient are left alone.
class Optimizer {
 public:
  Optimizer(std::vector<ParamGroup> groups, OptimizerSpec spec);
  virtual ~Optimizer() = default;

  virtual void step(double lr) = 0;
  void zero_grad();

  const std::vector<ParamGroup>& groups() const { return groups_; }
  const OptimizerSpec& spec() const { return spec_; }
  double group_lr(std::size_t group, double lr) const { return lr * groups_.at(group).lr_mult; }

  /// Named state arrays (slot "<kind>.<param name>"), for checkpoints.
  std::vector<std::pair<std::string, torch::Tensor>> state() const;
  /// Restores state saved by state(); throws ShapeMismatch on disagreement.
  void load_state(const std::map<std::string, torch::Tensor>& saved);

 protected:
  torch::Tensor& slot(const std::string& kind, const std::string& name, const torch::Tensor& like);

  std::vector<ParamGroup> groups_;
  OptimizerSpec spec_;
  std::map<std::string, torch::Tensor> slots_;
};

/// v ← m·v + g;  p ← p − lr·(v + wd·p)
class SGD : public Optimizer {
 public:
  using Optimizer::Optimizer;
  void step(double lr) override;
};

/// Adam moments with bias correction and decoupled decay:
///   p ← p − lr·(m̂ / (sqrt(v̂) + eps) + wd·p)
class AdamW : public Optimizer {
 public:
  using Optimizer::Optimizer;
  void step(double lr) override;
};

/// Builds the configured rule over `model`'s trainable parameters. ConfigError on unknown rules.
std::unique_ptr<Optimizer> build_optimizer(torch::nn::Module& model, const OptimizerSpec& spec);

/// Poly schedule with optional linear warmup. Reads the `scheduler` section
/// {policy: poly, power, min_lr, max_iters, warmup_iters, warmup_ratio}; base_lr comes from the
/// optimizer.
struct ScheduleSpec {
  std::string policy = "poly";
  double base_lr = 0.01;
  double min_lr = 0.0;
  double power = 0.9;
  std::int64_t max_iters = 1000;
  std::int64_t warmup_iters = 0;
  double warmup_ratio = 0.1;

  void validate() const;
};

ScheduleSpec parse_schedule_spec(const ConfigNode& node, double base_lr);

/// iter < warmup: base·(r + (1 − r)·iter/warmup).
/// Afterwards: min + (base − min)·(1 − (iter − warmup)/(max − warmup))^power.
/// Throws IterOutOfRange outside [0, max_iters].
double lr_at(const ScheduleSpec& spec, std::int64_t iter);

}  // namespace sseg
