#include <gtest/gtest.h>

#include <torch/torch.h>

#include "checks.hpp"
#include "sseg/segmentors/attention.hpp"
#include "testing.hpp"

namespace sseg {
namespace {

using namespace sseg::testing;

constexpr double kTolerance = 1e-5;

TEST(NonLocal, MatchesBruteForce) { EXPECT_LE(nonlocal_vs_reference(), kTolerance); }

TEST(NonLocal, FreshBlockIsIdentity) {
  NonLocalBlock block(8);
  EXPECT_EQ(block->inner_channels(), 4);
  torch::NoGradGuard guard;
  const auto x = torch::randn({2, 8, 5, 3});
  EXPECT_TRUE(torch::equal(block->forward(x), x));
}

TEST(NonLocal, SinglePositionAddsProjectedValue) {
  NonLocalBlock block(4, 2, /*zero_init_output=*/false);
  torch::NoGradGuard guard;
  const auto x = torch::randn({2, 4, 1, 1});
  EXPECT_TRUE(torch::allclose(block->forward(x), x + block->output->forward(block->g->forward(x)), 1e-6, 1e-6));
}

TEST(CrissCross, SinglePositionAttendsToItself) {
  CrissCrossAttention attention(8);
  torch::NoGradGuard guard;
  attention->gamma.fill_(0.7);
  const auto x = torch::randn({1, 8, 1, 1});
  EXPECT_TRUE(torch::allclose(attention->forward(x), x + 0.7 * attention->value->forward(x), 1e-6, 1e-6));
}

TEST(CrissCross, MatchesBruteForce) { EXPECT_LE(criss_cross_vs_reference(), kTolerance); }

TEST(CrissCross, OneUnitSeesOnlyTheCrossTwoSeeEverything) {
  const auto r = criss_cross_reach();
  EXPECT_EQ(r.r1_off_cross, 0.0);
  EXPECT_GT(r.r1_on_cross, 1e-8);
  EXPECT_GT(r.r2_min_pair, 1e-8);
}

TEST(CrissCross, ZeroGammaIsIdentity) {
  CrissCrossAttention attention(16);
  EXPECT_EQ(attention->query->options.out_channels(), 2);
  EXPECT_EQ(attention->value->options.out_channels(), 16);
  torch::NoGradGuard guard;
  const auto x = torch::randn({1, 16, 4, 6});
  EXPECT_TRUE(torch::equal(attention->forward(x), x));
}

TEST(RegionPool, MatchesBruteForce) { EXPECT_LE(region_pool_vs_reference(), kTolerance); }

TEST(RegionPool, OneHotPartitionGivesPartMeans) {
  const auto features = torch::arange(16, torch::kDouble).view({1, 1, 4, 4});
  auto weights = torch::zeros({1, 2, 4, 4}, torch::kDouble);
  weights.index_put_({0, 0, torch::indexing::Slice(0, 2)}, 1.0);
  weights.index_put_({0, 1, torch::indexing::Slice(2, 4)}, 1.0);
  const auto regions = region_pool(features, weights);
  ASSERT_EQ(regions.sizes(), (std::vector<std::int64_t>{1, 2, 1}));
  EXPECT_DOUBLE_EQ(regions[0][0][0].item<double>(), 3.5);
  EXPECT_DOUBLE_EQ(regions[0][1][0].item<double>(), 11.5);
}

TEST(ObjectAttentionTest, WeightsAreADistributionOverRegions) {
  ObjectAttention attention(6, 4, 5);
  attention->eval();
  torch::NoGradGuard guard;
  const auto features = torch::randn({2, 6, 3, 4});
  const auto regions = torch::randn({2, 3, 6});
  const auto w = attention->attention(features, regions);
  ASSERT_EQ(w.sizes(), (std::vector<std::int64_t>{2, 12, 3}));
  EXPECT_TRUE(torch::allclose(w.sum(-1), torch::ones({2, 12})));
  EXPECT_GE(w.min().item<float>(), 0.0f);
  EXPECT_EQ(attention->forward(features, regions).sizes(), (std::vector<std::int64_t>{2, 5, 3, 4}));
}

TEST(ObjectAttentionTest, SingleRegionGetsAllTheWeight) {
  ObjectAttention attention(6, 4, 5);
  attention->eval();
  torch::NoGradGuard guard;
  const auto w = attention->attention(torch::randn({1, 6, 3, 3}), torch::randn({1, 1, 6}));
  EXPECT_TRUE(torch::allclose(w, torch::ones({1, 9, 1})));
}

}  // namespace
}  // namespace sseg
