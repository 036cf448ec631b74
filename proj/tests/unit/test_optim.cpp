#include <gtest/gtest.h>

#include <cmath>

#include <torch/torch.h>

#include "checks.hpp"
#include "sseg/optim/optimizer.hpp"
#include "testing.hpp"

namespace sseg {
namespace {

using testing::error_code_of;

struct TinyNet : torch::nn::Module {
  TinyNet() {
    auto backbone = torch::nn::Sequential(torch::nn::Conv2d(torch::nn::Conv2dOptions(1, 2, 1).bias(false)),
                                          torch::nn::BatchNorm2d(2));
    register_module("backbone", backbone);
    register_module("decode_head", torch::nn::Conv2d(torch::nn::Conv2dOptions(2, 1, 1)));
  }
};

// One scalar parameter inside a "head" group with unit multipliers.
struct Scalar {
  torch::Tensor p = torch::tensor({1.0}, torch::kDouble).requires_grad_(true);

  std::vector<ParamGroup> groups() {
    ParamGroup g;
    g.name = "head.weight";
    g.names = {"decode_head.w"};
    g.params = {p};
    return {g};
  }
  void set_grad(double g) { p.mutable_grad() = torch::tensor({g}, torch::kDouble); }
  double value() const { return p.item<double>(); }
};

const ParamGroup& group_named(const std::vector<ParamGroup>& groups, const std::string& name) {
  for (const auto& g : groups) {
    if (g.name == name) return g;
  }
  throw std::runtime_error("no group " + name);
}

TEST(SGDTest, HandComputedIterations) {
  OptimizerSpec spec;
  spec.momentum = 0.9;
  spec.weight_decay = 0.1;
  Scalar s;
  SGD sgd(s.groups(), spec);
  double p = 1.0, v = 0.0;
  for (const double g : {0.5, -0.25, 1.0}) {
    s.set_grad(g);
    sgd.step(0.2);
    v = 0.9 * v + g;
    p -= 0.2 * (v + 0.1 * p);
    EXPECT_NEAR(s.value(), p, 1e-15);
  }
}

TEST(AdamWTest, HandComputedIterations) {
  OptimizerSpec spec;
  spec.type = "adamw";
  spec.weight_decay = 0.01;
  Scalar s;
  AdamW adam(s.groups(), spec);
  double p = 1.0, m = 0.0, v = 0.0;
  int t = 0;
  for (const double g : {0.5, -0.25, 1.0, 0.1}) {
    s.set_grad(g);
    adam.step(0.1);
    ++t;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mhat = m / (1 - std::pow(0.9, t));
    const double vhat = v / (1 - std::pow(0.999, t));
    p -= 0.1 * (mhat / (std::sqrt(vhat) + 1e-8) + 0.01 * p);
    EXPECT_NEAR(s.value(), p, 1e-14);
  }
}

TEST(OptimizerTest, ParametersWithoutGradientsStay) {
  Scalar s;
  SGD sgd(s.groups(), OptimizerSpec{});
  sgd.step(1.0);
  EXPECT_EQ(s.value(), 1.0);
  s.set_grad(1.0);
  sgd.zero_grad();
  EXPECT_FALSE(s.p.grad().defined());
}

TEST(OptimizerTest, StateRoundTripAndShapeCheck) {
  OptimizerSpec spec;
  Scalar s;
  SGD a(s.groups(), spec);
  s.set_grad(1.0);
  a.step(0.1);
  std::map<std::string, torch::Tensor> saved;
  for (const auto& [k, v] : a.state()) saved.emplace(k, v);
  SGD b(s.groups(), spec);
  b.load_state(saved);
  EXPECT_TRUE(torch::equal(b.state().front().second, a.state().front().second));

  saved.begin()->second = torch::zeros({3}, torch::kDouble);
  EXPECT_EQ(error_code_of([&] { b.load_state(saved); }), "ShapeMismatch");
}

TEST(ParamGroups, MultipliersAreProductsOfPartAndKind) {
  TinyNet net;
  const auto spec = parse_optimizer_spec(ConfigNode::parse(R"({
    "type": "sgd", "base_lr": 0.01, "weight_decay": 0.0005,
    "groups": {"backbone": {"lr_mult": 0.1}, "head": {"lr_mult": 10, "weight_decay_mult": 2},
               "bias": {"lr_mult": 2}}})"));
  const auto groups = resolve_param_groups(net, spec);
  EXPECT_EQ(groups.size(), 4u);

  const auto& bw = group_named(groups, "backbone.weight");
  EXPECT_DOUBLE_EQ(bw.lr_mult, 0.1);
  EXPECT_DOUBLE_EQ(bw.weight_decay_mult, 1.0);
  const auto& bn = group_named(groups, "backbone.norm");
  EXPECT_DOUBLE_EQ(bn.lr_mult, 0.1);
  EXPECT_DOUBLE_EQ(bn.weight_decay_mult, 0.0);
  EXPECT_EQ(bn.params.size(), 2u);  // gain and shift
  const auto& hw = group_named(groups, "head.weight");
  EXPECT_DOUBLE_EQ(hw.lr_mult, 10.0);
  EXPECT_DOUBLE_EQ(hw.weight_decay_mult, 2.0);
  const auto& hb = group_named(groups, "head.bias");
  EXPECT_DOUBLE_EQ(hb.lr_mult, 20.0);
  EXPECT_DOUBLE_EQ(hb.weight_decay_mult, 0.0);
}

TEST(ParamGroups, UnownedParametersAreRejected) {
  torch::nn::Linear stray(2, 2);
  EXPECT_EQ(error_code_of([&] { resolve_param_groups(*stray, OptimizerSpec{}); }), "ConfigError");
}

TEST(OptimizerSpecParse, Errors) {
  EXPECT_EQ(error_code_of([] { parse_optimizer_spec(ConfigNode::parse(R"({"groups": {"neck": {}}})")); }),
            "ConfigError");
  EXPECT_EQ(error_code_of([] { parse_optimizer_spec(ConfigNode::parse(R"({"base_lr": -1})")); }), "ConfigError");
  EXPECT_EQ(error_code_of([] { parse_optimizer_spec(ConfigNode::parse(R"({"momentum": 1.0})")); }), "ConfigError");
  EXPECT_EQ(error_code_of([] { parse_optimizer_spec(ConfigNode::parse(R"({"betas": [0.9]})")); }), "ConfigError");
  EXPECT_EQ(error_code_of([] { parse_optimizer_spec(ConfigNode::parse(R"({"lr": 0.1})")); }), "InvalidParams");
  TinyNet net;
  OptimizerSpec spec;
  spec.type = "lamb";
  EXPECT_EQ(error_code_of([&] { build_optimizer(net, spec); }), "ConfigError");
}

TEST(Schedule, BoundariesAndMidpoint) {
  const auto r = testing::schedule_boundaries_and_midpoint();
  EXPECT_TRUE(r.boundaries_exact);
  EXPECT_LE(r.midpoint_error, 1e-12);
}

TEST(Schedule, MonotoneAfterWarmupAndRangeChecked) {
  const auto spec = parse_schedule_spec(
      ConfigNode::parse(R"({"policy": "poly", "power": 0.9, "min_lr": 0.0001, "max_iters": 100, "warmup_iters": 10})"),
      0.01);
  EXPECT_DOUBLE_EQ(lr_at(spec, 5), 0.01 * (0.1 + 0.9 * 0.5));
  for (std::int64_t t = 11; t <= 100; ++t) EXPECT_LE(lr_at(spec, t), lr_at(spec, t - 1));
  EXPECT_EQ(error_code_of([&] { lr_at(spec, 101); }), "IterOutOfRange");
  EXPECT_EQ(error_code_of([&] { lr_at(spec, -1); }), "IterOutOfRange");
  EXPECT_EQ(error_code_of([] { parse_schedule_spec(ConfigNode::parse(R"({"policy": "cosine"})"), 0.01); }),
            "ConfigError");
}

}  // namespace
}  // namespace sseg
