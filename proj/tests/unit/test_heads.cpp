#include <gtest/gtest.h>

#include <torch/torch.h>

#include "sseg/core/config.hpp"
#include "sseg/segmentors/heads.hpp"
#include "sseg/segmentors/segmentor.hpp"
#include "testing.hpp"

namespace sseg {
namespace {

using testing::error_code_of;
using testing::tiny_model;

class EveryHead : public ::testing::TestWithParam<std::string> {};

TEST_P(EveryHead, LogitsAtInputResolution) {
  auto model = build_segmentor(tiny_model(GetParam(), 4));
  model->eval();
  torch::NoGradGuard guard;
  const auto out = model->forward(torch::randn({2, 3, 64, 64}));
  EXPECT_EQ(out.main_logits.sizes(), (std::vector<std::int64_t>{2, 4, 64, 64}));
  ASSERT_EQ(out.aux_logits.size(), 1u);
  EXPECT_EQ(out.aux_logits[0].sizes(), (std::vector<std::int64_t>{2, 4, 64, 64}));
  EXPECT_TRUE(torch::isfinite(out.main_logits).all().item<bool>());
  EXPECT_EQ(model->num_classes(), 4);
  EXPECT_EQ(model->size_divisor(), 32);
}

TEST_P(EveryHead, ParameterNamesArePrefixedByPart) {
  auto model = build_segmentor(tiny_model(GetParam(), 3));
  bool head = false, aux = false;
  for (const auto& item : model->named_parameters()) {
    const auto& name = item.key();
    const bool known = name.rfind("backbone.", 0) == 0 || name.rfind("decode_head.", 0) == 0 ||
                       name.rfind("aux_head.", 0) == 0;
    EXPECT_TRUE(known) << name;
    head = head || name.rfind("decode_head.", 0) == 0;
    aux = aux || name.rfind("aux_head.", 0) == 0;
  }
  EXPECT_TRUE(head);
  EXPECT_TRUE(aux);
}

TEST_P(EveryHead, BackwardReachesEveryParameter) {
  auto model = build_segmentor(tiny_model(GetParam(), 4));
  model->train();
  const auto out = model->forward(torch::randn({2, 3, 32, 32}));
  (out.main_logits.square().mean() + out.aux_logits[0].square().mean()).backward();
  for (const auto& item : model->named_parameters()) {
    EXPECT_TRUE(item.value().grad().defined()) << item.key();
  }
}

TEST_P(EveryHead, TinyConfigBuilds) {
  const auto config = load_config(testing::source_dir() / "configs" / (GetParam() + "_tiny.yaml"));
  auto model = build_segmentor(config.at("model"));
  EXPECT_EQ(model->num_classes(), 4);
}

INSTANTIATE_TEST_SUITE_P(Heads, EveryHead, ::testing::ValuesIn(head_types()),
                         [](const auto& info) { return info.param; });

TEST(HeadCatalog, ListsAllEight) {
  EXPECT_EQ(head_types(), (std::vector<std::string>{"ccnet", "deeplabv3", "deeplabv3plus", "fcn", "nonlocal",
                                                    "ocrnet", "pspnet", "upernet"}));
}

TEST(AuxHead, NullDisablesItExceptForOcr) {
  auto spec = tiny_model("pspnet", 4);
  spec["segmentor"]["aux"] = nullptr;
  auto model = build_segmentor(spec);
  torch::NoGradGuard guard;
  model->eval();
  EXPECT_TRUE(model->forward(torch::randn({1, 3, 32, 32})).aux_logits.empty());

  auto ocr = tiny_model("ocrnet", 4);
  ocr["segmentor"]["aux"] = nullptr;
  EXPECT_EQ(error_code_of([&] { build_segmentor(ocr); }), "ConfigError");
}

TEST(AuxHead, DefaultsToNominalStride16Level) {
  EXPECT_EQ(default_aux_index({{4, 8}, {8, 16}, {8, 32}, {8, 64}}), 2);
  EXPECT_EQ(default_aux_index({{1, 8}, {2, 16}}), 1);
}

TEST(HeadConfig, UnknownKeysAndTypesFail) {
  auto spec = tiny_model("fcn", 4);
  spec["segmentor"]["bins"] = ConfigNode::array({1, 2});
  EXPECT_EQ(error_code_of([&] { build_segmentor(spec); }), "InvalidParams");
  spec = tiny_model("fcn", 4);
  spec["segmentor"]["type"] = "segformer";
  EXPECT_EQ(error_code_of([&] { build_segmentor(spec); }), "UnknownType");
}

TEST(Internals, RecordedOnRequest) {
  auto model = build_segmentor(tiny_model("ocrnet", 4));
  model->eval();
  model->set_record_internals(true);
  torch::NoGradGuard guard;
  const auto out = model->forward(torch::randn({1, 3, 32, 32}));
  EXPECT_TRUE(out.internals.contains("decoded"));
  EXPECT_TRUE(out.internals.contains("aux_head_logits"));
  EXPECT_EQ(out.internals.at("head_logits").size(2), 4);  // stride 8
}

TEST(DebugModels, EchoAndZero) {
  const auto gt = torch::tensor({0, 2, 255, 1}, torch::kLong).view({1, 2, 2});
  auto echo = build_segmentor(ConfigNode::parse(R"({"num_classes": 3, "segmentor": {"type": "gt_echo"}})"));
  const auto logits = echo->forward(torch::zeros({1, 3, 2, 2}), gt).main_logits;
  EXPECT_TRUE(torch::equal(logits.argmax(1), torch::tensor({0, 2, 0, 1}, torch::kLong).view({1, 2, 2})));
  EXPECT_TRUE(echo->parameters().empty());

  auto zero = build_segmentor(ConfigNode::parse(R"({"num_classes": 5, "segmentor": {"type": "zero_logits"}})"));
  const auto z = zero->forward(torch::ones({2, 3, 4, 6})).main_logits;
  EXPECT_EQ(z.sizes(), (std::vector<std::int64_t>{2, 5, 4, 6}));
  EXPECT_EQ(z.abs().max().item<float>(), 0.0f);
}

}  // namespace
}  // namespace sseg
