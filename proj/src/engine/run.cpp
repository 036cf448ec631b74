#include "sseg/engine/run.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "sseg/core/errors.hpp"
#include "sseg/core/fs.hpp"
#include "sseg/engine/trainer.hpp"
#include "sseg/evaluation/inference.hpp"

namespace sseg {
namespace fs = std::filesystem;
namespace {

/// Keeps the records of a JSON-lines log whose iteration does not exceed `last`.
void truncate_log(const fs::path& path, std::int64_t last) {
  if (!fs::exists(path)) return;
  std::istringstream in(read_file(path));
  std::string kept, line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto record = ConfigNode::parse(line, nullptr, /*allow_exceptions=*/false);
    if (record.is_discarded() || !record.contains("iteration")) continue;
    if (record.at("iteration").get<std::int64_t>() <= last) kept += line + "\n";
  }
  write_file_atomic(path, kept);
}

class JsonLog {
 public:
  explicit JsonLog(const fs::path& path) : out_(path, std::ios::app) {
    check(out_.good(), ErrorCode::IOError, "cannot open log " + path.string());
  }
  void write(const ConfigNode& record) {
    out_ << record.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

std::string checkpoint_name(std::int64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%06lld.ckpt", static_cast<long long>(iteration));
  return buf;
}

}  // namespace

DatasetPtr build_dataset(const ConfigNode& config, const std::string& split) {
  check(config.is_object() && config.contains("dataset"), ErrorCode::ConfigError, "config is missing the 'dataset' section");
  return dataset_registry().build(config.at("dataset"), split);
}

TrainResult run_training(const ConfigNode& config, const TrainOptions& options) {
  check_required_sections(config);
  const auto& dir = options.work_dir;
  check(!dir.empty(), ErrorCode::ConfigError, "training needs a work directory");
  // Everything that can reject the config runs before the run directory is touched.
  Trainer trainer(config);
  const auto train_set = build_dataset(config, "train");
  const auto val_set = build_dataset(config, "val");

  fs::create_directories(dir / "logs");
  fs::create_directories(dir / "checkpoints");
  save_config(config, dir / "config.yaml");
  const auto train_log = dir / "logs" / "train.jsonl";
  const auto timing_log = dir / "logs" / "timing.jsonl";
  if (options.resume) {
    trainer.load_checkpoint(*options.resume);
    truncate_log(train_log, trainer.iteration());
    truncate_log(timing_log, trainer.iteration());
  } else {
    write_file_atomic(train_log, std::string_view());
    write_file_atomic(timing_log, std::string_view());
  }
  const auto& runtime = trainer.runtime();
  LoaderOptions loader_options;
  loader_options.batch_size = runtime.batch_size;
  loader_options.seed = runtime.seed;
  loader_options.num_workers = runtime.num_workers;
  loader_options.size_divisor = runtime.size_divisor;
  const DataLoader loader(train_set, loader_options);
  EvalOptions eval_options;
  eval_options.inference = runtime.inference;

  JsonLog log(train_log);
  JsonLog timing(timing_log);
  TrainResult result;
  const auto max_iters = trainer.max_iters();
  auto save = [&](const fs::path& path) {
    trainer.save_checkpoint(path);
    result.last_checkpoint = path;
  };

  while (trainer.iteration() < max_iters) {
    const auto metrics = trainer.step(loader.batch_at(trainer.iteration()));
    const auto it = metrics.iteration;
    log.write(metrics.to_json());
    timing.write({{"iteration", it}, {"step_time", metrics.step_time}});
    if (!options.quiet && (it % 50 == 0 || it == 1)) {
      std::printf("iter %lld/%lld  loss %.4f  lr %.6g%s\n", static_cast<long long>(it), static_cast<long long>(max_iters),
                  metrics.total_loss, metrics.lr, metrics.skipped ? "  (skipped)" : "");
      std::fflush(stdout);
    }
    const bool last = it == max_iters;
    const bool interrupted = options.stop_at && it >= *options.stop_at;
    if (val_set->size() > 0 && (it % runtime.eval_interval == 0 || last)) {
      const auto report = evaluate(trainer.model(), *val_set, eval_options);
      const bool best = trainer.record_eval(report.miou);
      log.write({{"iteration", it}, {"eval", {{"miou", report.miou}, {"aacc", report.aacc}, {"macc", report.macc}}}});
      if (!options.quiet) {
        std::printf("eval @%lld  mIoU %.4f  aAcc %.4f\n", static_cast<long long>(it), report.miou, report.aacc);
        std::fflush(stdout);
      }
      if (best) trainer.save_checkpoint(dir / "checkpoints" / "best.ckpt");
      if (last) result.final_metrics = report;
    }
    if (it % runtime.checkpoint_interval == 0 || last || interrupted) {
      save(dir / "checkpoints" / checkpoint_name(it));
      trainer.save_checkpoint(dir / "checkpoints" / "latest.ckpt");
    }
    if (interrupted) break;
  }

  result.iteration = trainer.iteration();
  result.best_miou = trainer.best_metric();
  if (result.final_metrics) {
    auto report = result.final_metrics->to_json(val_set->descriptor().class_names);
    report["iteration"] = result.iteration;
    report["best_miou"] = result.best_miou;
    write_file_atomic(dir / "metrics.json", report.dump(2) + "\n");
  }
  return result;
}

}  // namespace sseg
