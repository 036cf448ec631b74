#include "scenarios.hpp"

#include "sseg/core/errors.hpp"
#include "sseg/datasets/loader.hpp"
#include "sseg/engine/archive.hpp"
#include "sseg/engine/run.hpp"
#include "sseg/engine/trainer.hpp"
#include "sseg/nn/layers.hpp"
#include "testing.hpp"

namespace sseg::testing {
namespace fs = std::filesystem;
namespace {

double pixel_accuracy(SegmentorImpl& model, const Batch& batch) {
  torch::NoGradGuard guard;
  const bool was_training = model.is_training();
  model.eval();
  const auto pred = argmax_classes(model.forward(batch.images).main_logits);
  model.train(was_training);
  const auto valid = batch.masks != kDefaultIgnoreIndex;
  return (pred.eq(batch.masks) & valid).sum().item<double>() / valid.sum().item<double>();
}

ConfigNode without_dropout(ConfigNode config) {
  auto& seg = config["model"]["segmentor"];
  seg["dropout"] = 0.0;
  seg["aux"]["dropout"] = 0.0;
  return config;
}

std::vector<torch::Tensor> parameters_of(SegmentorImpl& model) {
  std::vector<torch::Tensor> out;
  for (const auto& p : model.parameters()) out.push_back(p.detach().clone());
  return out;
}

}  // namespace

OverfitResult overfit_single_batch(const std::string& head, const fs::path& data_root, int max_steps, double target) {
  // Stride-8 logits on 64x64 images cap pixel accuracy near 0.97 (boundary pixels), so the batch
  // uses 256x256 images where the same shapes span more output cells.
  SyntheticSize size;
  size.count = 4;
  size.val_count = 1;
  size.size = 256;
  auto config = without_dropout(tiny_training_config(head, data_root, size));
  config["optimizer"] = {{"type", "sgd"}, {"base_lr", 0.5}, {"momentum", 0.9}, {"weight_decay", 0.0}};
  // A long horizon keeps the poly lr near base_lr over the few steps taken.
  config["scheduler"]["max_iters"] = 1000;
  Trainer trainer(config);
  const auto batch = fixed_batch(config, 4);
  OverfitResult result;
  for (int step = 1; step <= max_steps; ++step) {
    trainer.step(batch);
    const double acc = pixel_accuracy(trainer.model(), batch);
    if (acc > result.accuracy) result.accuracy = acc;
    result.steps = step;
    if (acc >= target) break;
  }
  return result;
}

double data_parallel_divergence(const std::string& head, const fs::path& data_root, int steps) {
  auto config = without_dropout(tiny_training_config(head, data_root));
  config["runtime"]["norm_eval"] = true;
  config["scheduler"]["max_iters"] = steps;
  auto sharded = config;
  sharded["runtime"]["replicas"] = 2;

  Trainer single(config);
  Trainer parallel(sharded);
  const auto dataset = build_dataset(config, "train");
  LoaderOptions options;
  options.batch_size = 4;
  const DataLoader loader(dataset, options);
  for (int t = 0; t < steps; ++t) {
    const auto batch = loader.batch_at(t);
    single.step(batch);
    parallel.step(batch);
  }
  return max_rel_diff(parameters_of(parallel.model()), parameters_of(single.model()));
}

double fp16_gradient_divergence(const fs::path& data_root) {
  auto config = without_dropout(tiny_training_config("fcn", data_root));
  auto half = config;
  half["runtime"]["fp16"] = true;
  Trainer fp32(config);
  Trainer fp16(half);
  const auto batch = fixed_batch(config, 4);
  fp32.step(batch);
  fp16.step(batch);
  return max_rel_diff(fp16.last_gradients(), fp32.last_gradients());
}

SkipResult fp16_injected_overflow(const fs::path& data_root) {
  auto config = tiny_training_config("fcn", data_root);
  config["runtime"]["fp16"] = true;
  Trainer trainer(config);
  const auto batch = fixed_batch(config, 4);
  const auto before = parameters_of(trainer.model());
  SkipResult result;
  result.scale_before = trainer.scaler().scale();
  trainer.inject_nonfinite_gradient();
  result.skipped = trainer.step(batch).skipped;
  result.scale_after = trainer.scaler().scale();
  result.parameters_unchanged = max_rel_diff(parameters_of(trainer.model()), before) == 0.0;
  return result;
}

int scaler_doublings(std::int64_t steps) {
  LossScaler scaler;
  int doublings = 0;
  for (std::int64_t i = 0; i < steps; ++i) {
    const double before = scaler.scale();
    scaler.update(true);
    if (scaler.scale() == 2 * before) ++doublings;
  }
  return doublings;
}

bool deterministic_runs_identical(const fs::path& data_root, const fs::path& work) {
  const auto config = tiny_training_config("pspnet", data_root);
  TrainOptions a{work / "det_a", std::nullopt, std::nullopt, true};
  TrainOptions b{work / "det_b", std::nullopt, std::nullopt, true};
  run_training(config, a);
  run_training(config, b);
  return slurp(a.work_dir / "logs" / "train.jsonl") == slurp(b.work_dir / "logs" / "train.jsonl");
}

bool resume_matches_uninterrupted(const fs::path& data_root, const fs::path& work) {
  const auto config = tiny_training_config("pspnet", data_root);
  TrainOptions full{work / "full", std::nullopt, std::nullopt, true};
  run_training(config, full);

  TrainOptions first{work / "resumed", std::nullopt, 7, true};
  run_training(config, first);
  TrainOptions second{work / "resumed", work / "resumed" / "checkpoints" / "iter_000007.ckpt", std::nullopt, true};
  run_training(config, second);

  const auto ckpt_a = load_archive(full.work_dir / "checkpoints" / "latest.ckpt");
  const auto ckpt_b = load_archive(second.work_dir / "checkpoints" / "latest.ckpt");
  if (ckpt_a.arrays.size() != ckpt_b.arrays.size()) return false;
  for (std::size_t i = 0; i < ckpt_a.arrays.size(); ++i) {
    if (ckpt_a.arrays[i].first != ckpt_b.arrays[i].first) return false;
    if (!torch::equal(ckpt_a.arrays[i].second, ckpt_b.arrays[i].second)) return false;
  }
  return slurp(full.work_dir / "logs" / "train.jsonl") == slurp(second.work_dir / "logs" / "train.jsonl");
}

double synthetic_benchmark(const fs::path& config_file, const fs::path& data_root, const fs::path& work_dir) {
  const auto config = load_config(config_file, {"dataset.root=" + data_root.string()});
  TrainOptions options;
  options.work_dir = work_dir;
  options.quiet = true;
  const auto result = run_training(config, options);
  check(result.final_metrics.has_value(), ErrorCode::ConfigError, "benchmark run produced no final metrics");
  return result.final_metrics->miou;
}

double full_config_one_step(const fs::path& config_file) {
  auto config = load_config(config_file);
  config["scheduler"]["max_iters"] = 1;
  Trainer trainer(config);
  const auto k = trainer.model().num_classes();
  torch::manual_seed(0);
  Batch batch;
  batch.images = torch::randn({2, 3, 64, 64});
  batch.masks = torch::randint(0, k, {2, 64, 64}, torch::kLong);
  batch.metas.resize(2);
  const auto metrics = trainer.step(batch);
  check(std::isfinite(metrics.total_loss), ErrorCode::NonFiniteLoss, config_file.string() + ": non-finite loss");
  return metrics.total_loss;
}

}  // namespace sseg::testing
