#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "sseg/core/config.hpp"
#include "sseg/core/fs.hpp"
#include "sseg/engine/archive.hpp"
#include "sseg/engine/trainer.hpp"
#include "testing.hpp"

namespace sseg {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

struct Outcome {
  int code = -1;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  Outcome run(const std::string& args, const std::string& env = "") {
    const auto err_file = dir / "stderr.txt";
    const auto command = env + " '" + std::string(SSEG_BINARY) + "' " + args + " > '" + (dir / "stdout.txt").string() +
                         "' 2> '" + err_file.string() + "'";
    const int status = std::system(command.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(err_file)};
  }

  fs::path write_config(const std::string& name, ConfigNode config) {
    const auto path = dir / (name + ".yaml");
    save_config(config, path);
    return path;
  }

  // Four steps on a small synthetic set.
  ConfigNode tiny(const std::string& head = "fcn") {
    auto config = testing::tiny_training_config(head, dir / "data", {8, 3, 32, 4});
    config["scheduler"]["max_iters"] = 4;
    config["runtime"]["checkpoint_interval"] = 2;
    config["runtime"]["eval_interval"] = 2;
    return config;
  }

  ConfigNode echo_config() {
    auto config = tiny();
    config["model"] = ConfigNode::parse(R"({"num_classes": 4, "segmentor": {"type": "gt_echo"}})");
    return config;
  }

  TempDir dir;
};

void expect_single_error_line(const Outcome& o, const std::string& code) {
  EXPECT_EQ(o.err.rfind("sseg: error: " + code + ":", 0), 0u) << o.err;
  EXPECT_EQ(std::count(o.err.begin(), o.err.end(), '\n'), 1) << o.err;
}

TEST_F(Cli, UsageErrors) {
  const auto none = run("");
  EXPECT_EQ(none.code, 2);
  expect_single_error_line(none, "UsageError");
  EXPECT_EQ(run("train").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, GenDataIsDeterministic) {
  const auto args = "gen-data --seed 1 --count 3 --val-count 1 --size 32 --classes 3 --out ";
  ASSERT_EQ(run(args + (dir / "a").string()).code, 0);
  ASSERT_EQ(run(args + (dir / "b").string()).code, 0);
  EXPECT_TRUE(fs::exists(dir / "a" / "meta.json"));
  EXPECT_TRUE(fs::is_directory(dir / "a" / "images"));
  EXPECT_TRUE(fs::is_directory(dir / "a" / "annotations"));
  for (const auto& e : fs::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto twin = dir / "b" / fs::relative(e.path(), dir / "a");
    EXPECT_EQ(read_file(e.path()), read_file(twin)) << twin;
  }
}

TEST_F(Cli, GenDataNeedsTwoClasses) {
  const auto o = run("gen-data --classes 1 --out " + (dir / "x").string());
  EXPECT_EQ(o.code, 2);
  expect_single_error_line(o, "InvalidSpec");
}

TEST_F(Cli, TrainProducesRunDirectory) {
  const auto config = write_config("fcn_run", tiny());
  const auto work = dir / "work";
  ASSERT_EQ(run("train --config " + config.string() + " --work-dir " + work.string()).code, 0);
  EXPECT_TRUE(fs::exists(work / "checkpoints" / "iter_000002.ckpt"));
  EXPECT_TRUE(fs::exists(work / "checkpoints" / "latest.ckpt"));
  EXPECT_TRUE(fs::exists(work / "metrics.json"));
  EXPECT_TRUE(fs::exists(work / "config.yaml"));
}

TEST_F(Cli, DefaultWorkDirComesFromEnvironment) {
  const auto config = write_config("envrun", tiny());
  ASSERT_EQ(run("train --config " + config.string(), "SSEG_WORK_DIR_ROOT='" + (dir / "root").string() + "'").code, 0);
  EXPECT_TRUE(fs::exists(dir / "root" / "envrun" / "metrics.json"));
}

TEST_F(Cli, ZeroLearningRateLeavesParametersUnchanged) {
  auto config = tiny();
  config["optimizer"]["base_lr"] = 0.1;
  const auto path = write_config("zero_lr", config);
  const auto work = dir / "work";
  ASSERT_EQ(run("train --config " + path.string() + " --work-dir " + work.string() + " --set optimizer.base_lr=0").code,
            0);

  config["optimizer"]["base_lr"] = 0.0;
  Trainer initial(config);
  const auto saved = load_archive(work / "checkpoints" / "latest.ckpt");
  std::size_t compared = 0;
  for (const auto& item : initial.model().named_parameters()) {
    const auto stored = saved.find("model." + item.key());
    ASSERT_TRUE(stored.defined()) << item.key();
    EXPECT_TRUE(torch::equal(stored, item.value())) << item.key();
    ++compared;
  }
  EXPECT_GT(compared, 0u);
}

TEST_F(Cli, TrainConfigAndRuntimeErrors) {
  const auto config = write_config("fcn_run", tiny());
  const auto bad_override = run("train --config " + config.string() + " --work-dir " + (dir / "w").string() +
                                  " --set optimizer.nope=1");
  EXPECT_EQ(bad_override.code, 2);
  expect_single_error_line(bad_override, "BadOverride");

  auto unknown = tiny();
  unknown["model"]["segmentor"]["type"] = "segformer";
  EXPECT_EQ(run("train --config " + write_config("unknown", unknown).string() + " --work-dir " + (dir / "w").string()).code,
            2);
  EXPECT_FALSE(fs::exists(dir / "w"));  // rejected configs leave no run directory behind

  const auto missing_resume = run("train --config " + config.string() + " --work-dir " + (dir / "w").string() +
                                  " --resume " + (dir / "absent.ckpt").string());
  EXPECT_EQ(missing_resume.code, 3);
  expect_single_error_line(missing_resume, "IOError");
}

TEST_F(Cli, ResumeFromMismatchedCheckpoint) {
  const auto work = dir / "work";
  ASSERT_EQ(run("train --config " + write_config("fcn_run", tiny()).string() + " --work-dir " + work.string()).code, 0);
  auto wider = tiny();
  wider["model"]["segmentor"]["channels"] = 48;
  const auto o = run("train --config " + write_config("wider", wider).string() + " --work-dir " +
                     (dir / "w2").string() + " --resume " + (work / "checkpoints" / "latest.ckpt").string());
  EXPECT_EQ(o.code, 4);
  expect_single_error_line(o, "ShapeMismatch");
}

TEST_F(Cli, TestGroundTruthEchoScoresOne) {
  const auto config = write_config("echo", echo_config());
  const auto out = dir / "out";
  ASSERT_EQ(run("test --config " + config.string() + " --work-dir " + out.string() + " --save-pred").code, 0);
  const auto report = ConfigNode::parse(read_file(out / "test_metrics.json"));
  EXPECT_DOUBLE_EQ(report["miou"].get<double>(), 1.0);
  EXPECT_FALSE(fs::is_empty(out / "predictions" / "index"));
  EXPECT_FALSE(fs::is_empty(out / "predictions" / "color"));
}

TEST_F(Cli, TestReportsAreRepeatableAndSlideMatchesWhole) {
  const auto train_config = write_config("fcn_run", tiny());
  const auto work = dir / "work";
  ASSERT_EQ(run("train --config " + train_config.string() + " --work-dir " + work.string()).code, 0);
  const auto ckpt = (work / "checkpoints" / "latest.ckpt").string();

  // 32x32 images inside a 64x64 window.
  auto sliding = tiny();
  sliding["runtime"]["inference"] = ConfigNode::parse(R"({"mode": "whole", "window": [64, 64], "stride": [32, 32]})");
  const auto config = write_config("slide", sliding).string();
  ASSERT_EQ(run("test --config " + config + " --checkpoint " + ckpt + " --work-dir " + (dir / "t1").string()).code, 0);
  ASSERT_EQ(run("test --config " + config + " --checkpoint " + ckpt + " --work-dir " + (dir / "t2").string()).code, 0);
  ASSERT_EQ(
      run("test --config " + config + " --checkpoint " + ckpt + " --slide --work-dir " + (dir / "t3").string()).code,
      0);
  const auto first = read_file(dir / "t1" / "test_metrics.json");
  EXPECT_EQ(first, read_file(dir / "t2" / "test_metrics.json"));
  auto whole = ConfigNode::parse(first);
  auto slide = ConfigNode::parse(read_file(dir / "t3" / "test_metrics.json"));
  EXPECT_EQ(slide["inference"], "slide");
  whole.erase("inference");
  slide.erase("inference");
  EXPECT_EQ(whole, slide);
}

TEST_F(Cli, TestCheckpointErrors) {
  const auto work = dir / "work";
  ASSERT_EQ(run("train --config " + write_config("fcn_run", tiny()).string() + " --work-dir " + work.string()).code, 0);
  const auto psp = write_config("psp", tiny("pspnet"));
  const auto mismatch = run("test --config " + psp.string() + " --checkpoint " +
                            (work / "checkpoints" / "latest.ckpt").string() + " --work-dir " + (dir / "t").string());
  EXPECT_EQ(mismatch.code, 4);
  expect_single_error_line(mismatch, "ShapeMismatch");

  EXPECT_EQ(run("test --config " + psp.string() + " --work-dir " + (dir / "t").string()).code, 2);
}

}  // namespace
}  // namespace sseg
