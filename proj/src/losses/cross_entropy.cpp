#include "sseg/losses/cross_entropy.hpp"

#include "sseg/core/errors.hpp"
#include "sseg/core/params.hpp"

namespace sseg {

void LossSpec::validate(std::int64_t num_classes) const {
  check(aux_weight >= 0.0, ErrorCode::ConfigError, "loss.aux_weight must be >= 0");
  check(label_smoothing >= 0.0 && label_smoothing < 1.0, ErrorCode::ConfigError, "loss.label_smoothing must lie in [0, 1)");
  if (class_weights) {
    check(static_cast<std::int64_t>(class_weights->size()) == num_classes, ErrorCode::ConfigError,
          "loss.class_weights needs one entry per class (" + std::to_string(num_classes) + ")");
    for (const double w : *class_weights) check(w >= 0.0, ErrorCode::ConfigError, "loss.class_weights must be >= 0");
  }
}

LossSpec parse_loss_spec(const ConfigNode& node) {
  Params p(node, "loss");
  const auto type = p.get<std::string>("type", "cross_entropy");
  check(type == "cross_entropy", ErrorCode::ConfigError, "unknown loss type '" + type + "'");
  LossSpec spec;
  spec.ignore_index = p.get<std::int64_t>("ignore_index", spec.ignore_index);
  if (!p.is_null("class_weights")) spec.class_weights = p.require<std::vector<double>>("class_weights");
  spec.aux_weight = p.get<double>("aux_weight", spec.aux_weight);
  spec.label_smoothing = p.get<double>("label_smoothing", spec.label_smoothing);
  p.finish();
  return spec;
}

LossValue cross_entropy_sum(const torch::Tensor& logits, const torch::Tensor& target, const LossSpec& spec) {
  check(logits.dim() == 4 && target.dim() == 3, ErrorCode::ShapeError, "cross_entropy expects N×K×H×W logits and N×H×W targets");
  check(logits.size(0) == target.size(0) && logits.size(2) == target.size(1) && logits.size(3) == target.size(2),
        ErrorCode::ShapeError, "logits and targets disagree in size");
  const auto k = logits.size(1);
  const auto labels = target.to(torch::kLong);
  const auto valid = labels != spec.ignore_index;
  const auto illegal = valid.logical_and(labels.lt(0).logical_or(labels.ge(k)));
  if (illegal.any().item<bool>()) {
    const auto bad = labels.masked_select(illegal)[0].item<std::int64_t>();
    fail(ErrorCode::LabelOutOfRange, "target label " + std::to_string(bad) + " is outside 0.." + std::to_string(k - 1) +
                                         " and is not the ignore index " + std::to_string(spec.ignore_index));
  }
  const auto safe = labels.masked_fill(valid.logical_not(), 0);
  // Half logits are promoted; double stays double.
  const auto dtype = logits.scalar_type() == torch::kDouble ? torch::kDouble : torch::kFloat;
  const auto log_probs = torch::log_softmax(logits.to(dtype), 1);
  auto nll = -log_probs.gather(1, safe.unsqueeze(1)).squeeze(1);
  if (spec.label_smoothing > 0.0) {
    const double eps = spec.label_smoothing;
    nll = (1.0 - eps) * nll - (eps / static_cast<double>(k)) * log_probs.sum(1);
  }
  torch::Tensor weight = torch::ones_like(nll);
  if (spec.class_weights) {
    check(static_cast<std::int64_t>(spec.class_weights->size()) == k, ErrorCode::ConfigError,
          "class_weights length does not match the logits' class count");
    const auto table = torch::tensor(*spec.class_weights, dtype);
    weight = table.index_select(0, safe.flatten()).view_as(nll);
  }
  const auto zero = torch::zeros_like(nll);
  LossValue out;
  out.loss = torch::where(valid, nll * weight, zero).sum();
  out.normalizer = torch::where(valid, weight, zero).sum().item<double>();
  out.valid_pixels = valid.sum().item<std::int64_t>();
  return out;
}

LossValue cross_entropy(const torch::Tensor& logits, const torch::Tensor& target, const LossSpec& spec) {
  auto out = cross_entropy_sum(logits, target, spec);
  if (out.normalizer > 0.0) out.loss = out.loss / out.normalizer;
  return out;
}

LossBreakdown combine_losses(const torch::Tensor& main, const std::vector<torch::Tensor>& aux, double aux_weight) {
  LossBreakdown out;
  out.total = main;
  out.main = main.item<double>();
  for (const auto& term : aux) {
    out.total = out.total + aux_weight * term;
    out.aux.push_back(term.item<double>());
  }
  return out;
}

}  // namespace sseg
