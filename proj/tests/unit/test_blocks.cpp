#include <gtest/gtest.h>

#include <torch/torch.h>

#include "checks.hpp"
#include "sseg/segmentors/blocks.hpp"
#include "testing.hpp"

namespace sseg {
namespace {

using namespace sseg::testing;

TEST(PyramidPoolingTest, BranchesAreCellMeans) { EXPECT_LE(ppm_vs_cell_means(), 1e-5); }

TEST(PyramidPoolingTest, ConcatAndFuseShapes) {
  PyramidPooling ppm(8, 4, std::vector<std::int64_t>{1, 2, 3, 6});
  ppm->eval();
  torch::NoGradGuard guard;
  const auto x = torch::randn({2, 8, 12, 10});
  EXPECT_EQ(ppm->concat_channels(), 8 + 4 * 4);
  const auto cat = ppm->concat(x);
  EXPECT_EQ(cat.sizes(), (std::vector<std::int64_t>{2, 24, 12, 10}));
  EXPECT_TRUE(torch::equal(cat.slice(1, 0, 8), x));
  EXPECT_EQ(ppm->pooled(x, 3).sizes(), (std::vector<std::int64_t>{2, 4, 6, 6}));
  EXPECT_EQ(ppm->forward(x).sizes(), (std::vector<std::int64_t>{2, 4, 12, 10}));
}

TEST(AtrousPyramidTest, BranchesAreSparseConvolutions) { EXPECT_LE(aspp_vs_sparse_conv(), 1e-5); }

TEST(AtrousPyramidTest, GlobalBranchIsSpatiallyConstant) {
  AtrousPyramid aspp(6, 4, std::vector<std::int64_t>{1, 2}, true);
  aspp->eval();
  torch::NoGradGuard guard;
  const auto x = torch::randn({2, 6, 7, 9});
  EXPECT_EQ(aspp->concat_channels(), 4 * 4);
  EXPECT_EQ(aspp->global_branch(x).sizes(), (std::vector<std::int64_t>{2, 4, 1, 1}));
  const auto cat = aspp->concat(x);
  ASSERT_EQ(cat.sizes(), (std::vector<std::int64_t>{2, 16, 7, 9}));
  const auto global = cat.slice(1, 12, 16);
  EXPECT_TRUE(torch::allclose(global, global.select(2, 0).select(2, 0).unsqueeze(-1).unsqueeze(-1).expand_as(global)));
  EXPECT_EQ(aspp->forward(x).sizes(), (std::vector<std::int64_t>{2, 4, 7, 9}));

  AtrousPyramid local(6, 4, std::vector<std::int64_t>{1, 2}, false);
  EXPECT_EQ(local->concat_channels(), 3 * 4);
}

TEST(PlusDecoderTest, FusesAtLowLevelResolution) {
  PlusDecoder decoder(8, 5, 3, 6);
  decoder->eval();
  torch::NoGradGuard guard;
  EXPECT_EQ(decoder->concat_channels(), 11);
  const auto out = decoder->forward(torch::randn({1, 8, 4, 4}), torch::randn({1, 5, 16, 16}));
  EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{1, 6, 16, 16}));
}

TEST(PlusDecoderTest, ZeroLowProjectionIgnoresLowLevelInput) {
  PlusDecoder decoder(8, 5, 3, 6);
  decoder->eval();
  torch::NoGradGuard guard;
  decoder->low_projection->conv->weight.zero_();
  const auto context = torch::randn({1, 8, 4, 4});
  const auto a = decoder->forward(context, torch::randn({1, 5, 16, 16}));
  const auto b = decoder->forward(context, torch::randn({1, 5, 16, 16}));
  EXPECT_TRUE(torch::equal(a, b));
}

TEST(UPerFusionTest, ZeroLateralsLeaveOnlyTheDeepestLevel) {
  UPerFusion fusion(std::vector<std::int64_t>{4, 8, 16}, 6, std::vector<std::int64_t>{1, 2});
  fusion->eval();
  torch::NoGradGuard guard;
  for (std::size_t i = 0; i < 2; ++i) fusion->lateral(i)->conv->weight.zero_();
  const auto deepest = torch::randn({1, 16, 4, 4});
  const auto a = fusion->forward({torch::randn({1, 4, 16, 16}), torch::randn({1, 8, 8, 8}), deepest});
  const auto b = fusion->forward({torch::randn({1, 4, 16, 16}), torch::randn({1, 8, 8, 8}), deepest});
  EXPECT_TRUE(torch::equal(a, b));
}

TEST(UPerFusionTest, OutputsAtFinestLevel) {
  UPerFusion fusion(std::vector<std::int64_t>{4, 8, 16}, 6, std::vector<std::int64_t>{1, 2});
  fusion->eval();
  torch::NoGradGuard guard;
  EXPECT_EQ(fusion->concat_channels(), 18);
  const auto out =
      fusion->forward({torch::randn({2, 4, 16, 16}), torch::randn({2, 8, 8, 8}), torch::randn({2, 16, 4, 4})});
  EXPECT_EQ(out.sizes(), (std::vector<std::int64_t>{2, 6, 16, 16}));
}

}  // namespace
}  // namespace sseg
