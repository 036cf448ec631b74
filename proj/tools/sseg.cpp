// Command-line entry point: train, test, gen-data.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sseg/core/config.hpp"
#include "sseg/core/errors.hpp"
#include "sseg/core/fs.hpp"
#include "sseg/datasets/synthetic.hpp"
#include "sseg/engine/run.hpp"
#include "sseg/engine/trainer.hpp"
#include "sseg/evaluation/inference.hpp"
#include "sseg/segmentors/segmentor.hpp"

namespace fs = std::filesystem;
using namespace sseg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitCheckpoint = 4;

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch:
    case ErrorCode::VersionMismatch:
      return kExitCheckpoint;
    case ErrorCode::DuplicateName:
    case ErrorCode::EmptyName:
    case ErrorCode::UnknownType:
    case ErrorCode::InvalidParams:
    case ErrorCode::ParseError:
    case ErrorCode::BadOverride:
    case ErrorCode::TypeClash:
    case ErrorCode::BadPipeline:
    case ErrorCode::InvalidSpec:
    case ErrorCode::ConfigError:
    case ErrorCode::IterOutOfRange:
    case ErrorCode::BadWindow:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

void report_error(const std::string& code, std::string message) {
  for (auto& c : message) {
    if (c == '\n') c = ' ';
  }
  std::fprintf(stderr, "sseg: error: %s: %s\n", code.c_str(), message.c_str());
}

std::string strip_code_prefix(const Error& e) {
  const std::string what = e.what();
  const auto prefix = std::string(to_string(e.code())) + ": ";
  return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
}

fs::path default_work_dir(const fs::path& config) {
  const char* root = std::getenv("SSEG_WORK_DIR_ROOT");
  return fs::path(root != nullptr && *root != '\0' ? root : "work_dirs") / config.stem();
}

struct TrainArgs {
  std::string config;
  std::string work_dir;
  std::string resume;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  bool fp16 = false;
  std::vector<std::string> overrides;
};

struct TestArgs {
  std::string config;
  std::string checkpoint;
  std::string work_dir;
  bool save_pred = false;
  bool slide = false;
  std::vector<std::string> overrides;
};

struct GenArgs {
  std::uint64_t seed = 0;
  int count = 400;
  int val_count = 100;
  int size = 64;
  int classes = 4;
  std::string out = "data/synthetic";
};

int cmd_train(const TrainArgs& args) {
  auto overrides = args.overrides;
  if (args.seed) overrides.push_back("runtime.seed=" + std::to_string(*args.seed));
  if (args.deterministic) overrides.push_back("runtime.deterministic=true");
  if (args.fp16) overrides.push_back("runtime.fp16=true");
  const auto config = load_config(args.config, overrides);
  TrainOptions options;
  options.work_dir = args.work_dir.empty() ? default_work_dir(args.config) : fs::path(args.work_dir);
  if (!args.resume.empty()) options.resume = args.resume;
  const auto result = run_training(config, options);
  std::printf("finished at iteration %lld; run directory %s\n", static_cast<long long>(result.iteration),
              options.work_dir.string().c_str());
  if (result.final_metrics) std::printf("%s", result.final_metrics->to_text().c_str());
  return kExitOk;
}

int cmd_test(const TestArgs& args) {
  auto overrides = args.overrides;
  if (args.slide) overrides.push_back("runtime.inference.mode=slide");
  const auto config = load_config(args.config, overrides);
  check_required_sections(config);
  const auto runtime = parse_runtime_spec(config.at("runtime"));
  if (runtime.deterministic) enable_deterministic_mode();
  auto model = build_segmentor(config.at("model"));

  fs::path out_dir;
  if (!args.work_dir.empty()) {
    out_dir = args.work_dir;
  } else if (!args.checkpoint.empty() && fs::path(args.checkpoint).parent_path().filename() == "checkpoints") {
    out_dir = fs::path(args.checkpoint).parent_path().parent_path();
  } else {
    out_dir = default_work_dir(args.config);
  }
  if (!args.checkpoint.empty()) {
    load_weights(*model, args.checkpoint);
  } else {
    check(model->parameters().empty(), ErrorCode::ConfigError, "--checkpoint is required for a trainable model");
  }

  const auto dataset = build_dataset(config, "val");
  EvalOptions options;
  options.inference = runtime.inference;
  if (args.save_pred) options.prediction_dir = out_dir / "predictions";
  const auto report = evaluate(*model, *dataset, options);
  const auto& names = dataset->descriptor().class_names;
  auto json = report.to_json(names);
  json["inference"] = options.inference.mode;
  json["split"] = dataset->descriptor().split;
  write_file_atomic(out_dir / "test_metrics.json", json.dump(2) + "\n");
  std::printf("%s", report.to_text(names).c_str());
  std::printf("report written to %s\n", (out_dir / "test_metrics.json").string().c_str());
  return kExitOk;
}

int cmd_gen_data(const GenArgs& args) {
  SyntheticOptions opt;
  opt.seed = args.seed;
  opt.count = args.count;
  opt.val_count = args.val_count;
  opt.height = opt.width = args.size;
  opt.num_classes = args.classes;
  const auto descriptor = generate_synthetic_dataset(opt, args.out);
  std::printf("wrote %d train + %d val samples (%d classes) to %s\n", args.count, args.val_count, args.classes,
              descriptor.root.string().c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semantic segmentation toolbox"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train.config, "Config file")->required();
  train_cmd->add_option("--work-dir", train.work_dir, "Run directory (default $SSEG_WORK_DIR_ROOT/<config name>)");
  train_cmd->add_option("--resume", train.resume, "Checkpoint to resume from");
  train_cmd->add_option("--seed", train.seed, "Override runtime.seed");
  train_cmd->add_flag("--deterministic", train.deterministic, "Force deterministic mode");
  train_cmd->add_flag("--fp16", train.fp16, "Half-precision training with dynamic loss scaling");
  train_cmd->add_option("--set", train.overrides, "Config override key=value (repeatable)");

  TestArgs test;
  auto* test_cmd = app.add_subcommand("test", "Evaluate a checkpoint on the validation split");
  test_cmd->add_option("--config", test.config, "Config file")->required();
  test_cmd->add_option("--checkpoint", test.checkpoint, "Checkpoint file");
  test_cmd->add_option("--work-dir", test.work_dir, "Output directory for the report and predictions");
  test_cmd->add_flag("--save-pred", test.save_pred, "Write index and colorized prediction PNGs");
  test_cmd->add_flag("--slide", test.slide, "Sliding-window inference");
  test_cmd->add_option("--set", test.overrides, "Config override key=value (repeatable)");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic shapes dataset");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--count", gen.count, "Training samples");
  gen_cmd->add_option("--val-count", gen.val_count, "Validation samples");
  gen_cmd->add_option("--size", gen.size, "Image side in pixels");
  gen_cmd->add_option("--classes", gen.classes, "Class count including background");
  gen_cmd->add_option("--out", gen.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("UsageError", e.what());
    return kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train);
    if (*test_cmd) return cmd_test(test);
    return cmd_gen_data(gen);
  } catch (const Error& e) {
    report_error(std::string(to_string(e.code())), strip_code_prefix(e));
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    report_error("Internal", e.what());
    return kExitRuntime;
  }
}
