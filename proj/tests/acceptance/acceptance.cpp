// Acceptance runner: prints one PASS/FAIL line per criterion and exits nonzero if any fails.
//
//   sseg_acceptance [--only <name>] [--work-dir <dir>]
//
// Criterion names: full-configs, synthetic-benchmark, overfit, oracles, ccnet-reach,
// cross-entropy, data-parallel, fp16, determinism, schedule.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "checks.hpp"
#include "scenarios.hpp"
#include "sseg/core/errors.hpp"
#include "sseg/segmentors/heads.hpp"
#include "testing.hpp"

namespace fs = std::filesystem;
using namespace sseg::testing;

namespace {

// Frozen from the first baseline run (pspnet 0.8368, fcn 0.8316 mIoU) minus a 0.03 margin; both
// lie above the targets of 0.80 and 0.70.
constexpr double kPspnetMiou = 0.806;
constexpr double kFcnMiou = 0.801;
constexpr double kOracleTolerance = 1e-5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Outcome full_configs(const fs::path&) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(source_dir() / "configs" / "full")) {
    if (entry.is_regular_file() && entry.path().extension() == ".yaml") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::string failures;
  for (const auto& file : files) {
    try {
      full_config_one_step(file);
    } catch (const std::exception& e) {
      failures += " " + file.filename().string() + " (" + e.what() + ")";
    }
  }
  const bool pass = !files.empty() && failures.empty();
  return {pass, fmt("%zu configs built and stepped", files.size()) + (failures.empty() ? "" : "; failed:" + failures)};
}

Outcome synthetic_benchmark_criterion(const fs::path& work) {
  const auto data = work / "synthetic";
  const auto configs = source_dir() / "configs";
  const double psp = synthetic_benchmark(configs / "pspnet_tiny.yaml", data, work / "pspnet_tiny");
  const double fcn = synthetic_benchmark(configs / "fcn_tiny.yaml", data, work / "fcn_tiny");
  return {psp >= kPspnetMiou && fcn >= kFcnMiou,
          fmt("pspnet-tiny mIoU %.4f (>= %.3f), fcn-tiny mIoU %.4f (>= %.3f)", psp, kPspnetMiou, fcn, kFcnMiou)};
}

Outcome overfit(const fs::path& work) {
  bool pass = true;
  std::string detail;
  for (const auto& head : sseg::head_types()) {
    const auto r = overfit_single_batch(head, work / "overfit_data");
    pass = pass && r.accuracy >= 0.99;
    detail += fmt("%s %.4f@%d ", head.c_str(), r.accuracy, r.steps);
  }
  return {pass, detail + "(pixel acc >= 0.99 within 50 steps)"};
}

Outcome oracles(const fs::path&) {
  const auto cm = confusion_vs_nested_loops(1000, 0);
  const double nl = nonlocal_vs_reference();
  const double cc = criss_cross_vs_reference();
  const double rp = region_pool_vs_reference();
  const double ppm = ppm_vs_cell_means();
  const double aspp = aspp_vs_sparse_conv();
  const bool pass = cm.count_mismatches == 0 && cm.metric_error <= kOracleTolerance && nl <= kOracleTolerance &&
                    cc <= kOracleTolerance && rp <= kOracleTolerance && ppm <= kOracleTolerance &&
                    aspp <= kOracleTolerance;
  return {pass, fmt("confusion %d/%d mismatches (metric err %.1e); nonlocal %.1e, criss-cross %.1e, region pool %.1e, "
                    "ppm %.1e, aspp %.1e",
                    cm.count_mismatches, cm.cases, cm.metric_error, nl, cc, rp, ppm, aspp)};
}

Outcome ccnet_reach(const fs::path&) {
  const auto r = criss_cross_reach();
  const bool pass = r.r1_off_cross == 0.0 && r.r1_on_cross > 1e-8 && r.r2_min_pair > 1e-8;
  return {pass, fmt("R=1 max off-cross %.1e, min on-cross %.1e; R=2 min pair %.1e", r.r1_off_cross, r.r1_on_cross,
                    r.r2_min_pair)};
}

Outcome cross_entropy(const fs::path&) {
  const auto r = cross_entropy_gradient();
  return {r.gradient_rel_error <= 1e-4 && r.ignored_bit_zero,
          fmt("finite-difference rel err %.1e; ignored pixels bit-zero: %s", r.gradient_rel_error,
              r.ignored_bit_zero ? "yes" : "no")};
}

Outcome data_parallel(const fs::path& work) {
  const double fcn = data_parallel_divergence("fcn", work / "dp_data");
  const double psp = data_parallel_divergence("pspnet", work / "dp_data");
  return {fcn <= 1e-5 && psp <= 1e-5, fmt("max rel param diff after 10 steps: fcn %.1e, pspnet %.1e", fcn, psp)};
}

Outcome fp16(const fs::path& work) {
  const double grad = fp16_gradient_divergence(work / "fp16_data");
  const auto skip = fp16_injected_overflow(work / "fp16_data");
  const int doublings = scaler_doublings(2000);
  const bool halved = skip.scale_after == skip.scale_before / 2;
  const bool pass = grad <= 1e-2 && skip.skipped && halved && skip.parameters_unchanged && doublings == 1;
  return {pass, fmt("grad rel diff %.2e; overflow skipped %s, scale %g -> %g, params unchanged %s; doublings in 2000 "
                    "clean steps %d",
                    grad, skip.skipped ? "yes" : "no", skip.scale_before, skip.scale_after,
                    skip.parameters_unchanged ? "yes" : "no", doublings)};
}

Outcome determinism(const fs::path& work) {
  const bool same = deterministic_runs_identical(work / "det_data", work / "determinism");
  const bool resumed = resume_matches_uninterrupted(work / "det_data", work / "resume");
  return {same && resumed, fmt("repeat runs bit-identical: %s; resume equals uninterrupted: %s", same ? "yes" : "no",
                               resumed ? "yes" : "no")};
}

Outcome schedule(const fs::path&) {
  const auto r = schedule_boundaries_and_midpoint();
  return {r.boundaries_exact && r.midpoint_error <= 1e-12,
          fmt("boundaries exact: %s; midpoint abs err %.1e", r.boundaries_exact ? "yes" : "no", r.midpoint_error)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::string only;
  std::string work_dir;
  app.add_option("--only", only, "Run a single criterion");
  app.add_option("--work-dir", work_dir, "Scratch directory, kept afterwards (default: a temp dir, removed)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Outcome(const fs::path&)>>> criteria = {
      {"full-configs", full_configs},   {"synthetic-benchmark", synthetic_benchmark_criterion},
      {"overfit", overfit},             {"oracles", oracles},
      {"ccnet-reach", ccnet_reach},     {"cross-entropy", cross_entropy},
      {"data-parallel", data_parallel}, {"fp16", fp16},
      {"determinism", determinism},     {"schedule", schedule},
  };

  std::optional<TempDir> scratch;
  fs::path work;
  if (work_dir.empty()) {
    scratch.emplace("sseg-acceptance");
    work = scratch->path();
  } else {
    work = work_dir;
    fs::create_directories(work);
  }

  int failed = 0;
  int ran = 0;
  for (const auto& [name, run] : criteria) {
    if (!only.empty() && name != only) continue;
    ++ran;
    const auto started = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = run(work);
    } catch (const std::exception& e) {
      outcome = {false, std::string("error: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::printf("%s %-20s %s [%.1fs]\n", outcome.pass ? "PASS" : "FAIL", name.c_str(), outcome.detail.c_str(), seconds);
    std::fflush(stdout);
    if (!outcome.pass) ++failed;
  }
  if (ran == 0) {
    std::fprintf(stderr, "unknown criterion '%s'\n", only.c_str());
    return 2;
  }
  std::printf("%d/%d criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
