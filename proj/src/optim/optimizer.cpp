#include "sseg/optim/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <iterator>
#include <set>

#include "sseg/core/errors.hpp"
#include "sseg/core/params.hpp"

namespace sseg {
namespace {

const std::vector<std::string> kSelectors = {"backbone", "head", "norm", "bias"};

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

}  // namespace

OptimizerSpec parse_optimizer_spec(const ConfigNode& node) {
  Params p(node, "optimizer");
  OptimizerSpec spec;
  spec.type = p.get<std::string>("type", spec.type);
  spec.base_lr = p.get<double>("base_lr", spec.base_lr);
  spec.momentum = p.get<double>("momentum", spec.momentum);
  spec.weight_decay = p.get<double>("weight_decay", spec.weight_decay);
  if (!p.is_null("betas")) {
    const auto betas = p.require<std::vector<double>>("betas");
    check(betas.size() == 2, ErrorCode::ConfigError, "optimizer.betas needs two values");
    spec.beta1 = betas[0];
    spec.beta2 = betas[1];
  }
  spec.eps = p.get<double>("eps", spec.eps);
  spec.groups["norm"].weight_decay_mult = 0.0;
  spec.groups["bias"].weight_decay_mult = 0.0;
  const auto groups = p.get_node("groups");
  if (!groups.is_null()) {
    check(groups.is_object(), ErrorCode::ConfigError, "optimizer.groups must be a mapping");
    for (const auto& [selector, value] : groups.items()) {
      check(std::find(kSelectors.begin(), kSelectors.end(), selector) != kSelectors.end(), ErrorCode::ConfigError,
            "unknown parameter group selector '" + selector + "' (use backbone, head, norm or bias)");
      Params g(value, "optimizer/groups/" + selector);
      auto& mult = spec.groups[selector];
      mult.lr_mult = g.get<double>("lr_mult", mult.lr_mult);
      mult.weight_decay_mult = g.get<double>("weight_decay_mult", mult.weight_decay_mult);
      g.finish();
    }
  }
  p.finish();
  check(spec.base_lr >= 0.0, ErrorCode::ConfigError, "optimizer.base_lr must be >= 0");
  check(spec.weight_decay >= 0.0, ErrorCode::ConfigError, "optimizer.weight_decay must be >= 0");
  check(spec.momentum >= 0.0 && spec.momentum < 1.0, ErrorCode::ConfigError, "optimizer.momentum must lie in [0, 1)");
  return spec;
}

std::vector<ParamGroup> resolve_param_groups(torch::nn::Module& model, const OptimizerSpec& spec) {
  std::set<const void*> norm_params;
  auto collect_norm = [&](const torch::nn::Module& m) {
    if (dynamic_cast<const torch::nn::BatchNorm2dImpl*>(&m) == nullptr) return;
    for (const auto& param : m.parameters(/*recurse=*/false)) norm_params.insert(param.unsafeGetTensorImpl());
  };
  // Excluding self lets callers pass modules that are not owned by a shared_ptr.
  collect_norm(model);
  for (const auto& item : model.named_modules("", /*include_self=*/false)) collect_norm(*item.value());
  auto mult = [&](const std::string& selector) {
    const auto it = spec.groups.find(selector);
    return it == spec.groups.end() ? GroupMultipliers{} : it->second;
  };

  std::vector<ParamGroup> groups;
  std::string unmatched;
  for (const auto& item : model.named_parameters()) {
    if (!item.value().requires_grad()) continue;
    const auto& name = item.key();
    std::string part;
    if (starts_with(name, "backbone.")) {
      part = "backbone";
    } else if (starts_with(name, "decode_head.") || starts_with(name, "aux_head.")) {
      part = "head";
    } else {
      unmatched += "\n  " + name;
      continue;
    }
    std::string kind = "weight";
    if (norm_params.contains(item.value().unsafeGetTensorImpl())) {
      kind = "norm";
    } else if (name == "bias" || name.ends_with(".bias")) {
      kind = "bias";
    }
    const auto group_name = part + "." + kind;
    auto it = std::find_if(groups.begin(), groups.end(), [&](const ParamGroup& g) { return g.name == group_name; });
    if (it == groups.end()) {
      ParamGroup g;
      g.name = group_name;
      const auto a = mult(part);
      const auto b = kind == "weight" ? GroupMultipliers{} : mult(kind);
      g.lr_mult = a.lr_mult * b.lr_mult;
      g.weight_decay_mult = a.weight_decay_mult * b.weight_decay_mult;
      groups.push_back(std::move(g));
      it = std::prev(groups.end());
    }
    it->names.push_back(name);
    it->params.push_back(item.value());
  }
  check(unmatched.empty(), ErrorCode::ConfigError, "parameters match no group selector:" + unmatched);
  return groups;
}

Optimizer::Optimizer(std::vector<ParamGroup> groups, OptimizerSpec spec)
    : groups_(std::move(groups)), spec_(std::move(spec)) {}

void Optimizer::zero_grad() {
  for (auto& group : groups_) {
    for (auto& p : group.params) {
      if (p.grad().defined()) p.mutable_grad() = torch::Tensor();
    }
  }
}

torch::Tensor& Optimizer::slot(const std::string& kind, const std::string& name, const torch::Tensor& like) {
  auto [it, inserted] = slots_.try_emplace(kind + "." + name);
  if (inserted) it->second = torch::zeros_like(like, torch::MemoryFormat::Contiguous);
  return it->second;
}

std::vector<std::pair<std::string, torch::Tensor>> Optimizer::state() const {
  return {slots_.begin(), slots_.end()};
}

void Optimizer::load_state(const std::map<std::string, torch::Tensor>& saved) {
  std::map<std::string, torch::Tensor> shapes;
  for (const auto& group : groups_) {
    for (std::size_t i = 0; i < group.params.size(); ++i) shapes.emplace(group.names[i], group.params[i]);
  }
  std::string mismatches;
  std::map<std::string, torch::Tensor> restored;
  for (const auto& [key, value] : saved) {
    if (key == "step") {
      restored.emplace(key, value.clone());
      continue;
    }
    const auto dot = key.find('.');
    const auto name = dot == std::string::npos ? key : key.substr(dot + 1);
    const auto it = shapes.find(name);
    if (it == shapes.end()) {
      mismatches += "\n  " + key + ": no such parameter";
    } else if (it->second.sizes() != value.sizes()) {
      mismatches += "\n  " + key + ": saved " + c10::str(value.sizes()) + " vs model " + c10::str(it->second.sizes());
    } else {
      restored.emplace(key, value.to(it->second.options()).clone());
    }
  }
  check(mismatches.empty(), ErrorCode::ShapeMismatch, "optimizer state does not fit the model:" + mismatches);
  slots_ = std::move(restored);
}

void SGD::step(double lr) {
  torch::NoGradGuard guard;
  for (const auto& group : groups_) {
    const double group_rate = lr * group.lr_mult;
    const double decay = spec_.weight_decay * group.weight_decay_mult;
    for (std::size_t i = 0; i < group.params.size(); ++i) {
      auto p = group.params[i];
      if (!p.grad().defined()) continue;
      const auto& g = p.grad();
      auto& v = slot("momentum", group.names[i], p);
      v.mul_(spec_.momentum).add_(g);
      auto update = decay != 0.0 ? v + decay * p : v;
      p.sub_(group_rate * update);
    }
  }
}

void AdamW::step(double lr) {
  torch::NoGradGuard guard;
  auto& count = slots_["step"];
  if (!count.defined()) count = torch::zeros({1}, torch::kFloat64);
  count.add_(1);
  const double t = count.item<double>();
  const double correction1 = 1.0 - std::pow(spec_.beta1, t);
  const double correction2 = 1.0 - std::pow(spec_.beta2, t);
  for (const auto& group : groups_) {
    const double group_rate = lr * group.lr_mult;
    const double decay = spec_.weight_decay * group.weight_decay_mult;
    for (std::size_t i = 0; i < group.params.size(); ++i) {
      auto p = group.params[i];
      if (!p.grad().defined()) continue;
      const auto& g = p.grad();
      auto& m = slot("exp_avg", group.names[i], p);
      auto& v = slot("exp_avg_sq", group.names[i], p);
      m.mul_(spec_.beta1).add_(g, 1.0 - spec_.beta1);
      v.mul_(spec_.beta2).addcmul_(g, g, 1.0 - spec_.beta2);
      auto update = (m / correction1) / ((v / correction2).sqrt() + spec_.eps);
      if (decay != 0.0) update = update + decay * p;
      p.sub_(group_rate * update);
    }
  }
}

std::unique_ptr<Optimizer> build_optimizer(torch::nn::Module& model, const OptimizerSpec& spec) {
  auto groups = resolve_param_groups(model, spec);
  if (spec.type == "sgd") return std::make_unique<SGD>(std::move(groups), spec);
  if (spec.type == "adamw") return std::make_unique<AdamW>(std::move(groups), spec);
  fail(ErrorCode::ConfigError, "unknown optimizer type '" + spec.type + "' (use sgd or adamw)");
}

void ScheduleSpec::validate() const {
  check(policy == "poly", ErrorCode::ConfigError, "unknown lr policy '" + policy + "' (only poly is built in)");
  check(min_lr >= 0.0 && min_lr <= base_lr, ErrorCode::ConfigError, "scheduler needs 0 <= min_lr <= base_lr");
  check(power > 0.0, ErrorCode::ConfigError, "scheduler.power must be > 0");
  check(max_iters >= 1, ErrorCode::ConfigError, "scheduler.max_iters must be >= 1");
  check(warmup_iters >= 0 && warmup_iters < max_iters, ErrorCode::ConfigError,
        "scheduler needs 0 <= warmup_iters < max_iters");
  check(warmup_ratio >= 0.0 && warmup_ratio <= 1.0, ErrorCode::ConfigError, "scheduler.warmup_ratio must lie in [0, 1]");
}

ScheduleSpec parse_schedule_spec(const ConfigNode& node, double base_lr) {
  Params p(node, "scheduler");
  ScheduleSpec spec;
  spec.base_lr = base_lr;
  spec.policy = p.get<std::string>("policy", spec.policy);
  spec.min_lr = p.get<double>("min_lr", spec.min_lr);
  spec.power = p.get<double>("power", spec.power);
  spec.max_iters = p.get<std::int64_t>("max_iters", spec.max_iters);
  spec.warmup_iters = p.get<std::int64_t>("warmup_iters", spec.warmup_iters);
  spec.warmup_ratio = p.get<double>("warmup_ratio", spec.warmup_ratio);
  p.finish();
  spec.validate();
  return spec;
}

double lr_at(const ScheduleSpec& spec, std::int64_t iter) {
  check(iter >= 0 && iter <= spec.max_iters, ErrorCode::IterOutOfRange,
        "iteration " + std::to_string(iter) + " outside [0, " + std::to_string(spec.max_iters) + "]");
  if (iter < spec.warmup_iters) {
    const double progress = static_cast<double>(iter) / static_cast<double>(spec.warmup_iters);
    return spec.base_lr * (spec.warmup_ratio + (1.0 - spec.warmup_ratio) * progress);
  }
  if (iter == spec.max_iters) return spec.min_lr;
  const double progress = static_cast<double>(iter - spec.warmup_iters) /
                          static_cast<double>(spec.max_iters - spec.warmup_iters);
  return spec.min_lr + (spec.base_lr - spec.min_lr) * std::pow(1.0 - progress, spec.power);
}

}  // namespace sseg
