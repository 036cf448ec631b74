#include <gtest/gtest.h>

#include <torch/torch.h>

#include "sseg/backbones/backbone.hpp"
#include "sseg/backbones/resnet.hpp"
#include "sseg/backbones/unet.hpp"
#include "sseg/engine/archive.hpp"
#include "sseg/engine/trainer.hpp"
#include "testing.hpp"

namespace sseg {
namespace {

using testing::error_code_of;

std::shared_ptr<ResNetImpl> resnet(int depth, std::int64_t output_stride, double width = 0.25) {
  ResNetOptions o;
  o.depth = depth;
  o.output_stride = output_stride;
  o.width_multiplier = width;
  o.stage_blocks = {1, 1, 1, 1};
  return std::make_shared<ResNetImpl>(o);
}

std::vector<std::int64_t> strides(const FeaturePyramid& p) {
  std::vector<std::int64_t> out;
  for (const auto& l : p.levels) out.push_back(l.stride);
  return out;
}

TEST(ResNet, OutputStrideControlsLevelStrides) {
  torch::NoGradGuard guard;
  const auto x = torch::randn({1, 3, 64, 64});
  const std::map<std::int64_t, std::vector<std::int64_t>> expected = {
      {8, {4, 8, 8, 8}}, {16, {4, 8, 16, 16}}, {32, {4, 8, 16, 32}}};
  for (const auto& [os, want] : expected) {
    auto net = resnet(18, os);
    net->eval();
    const auto pyramid = net->forward(x);
    EXPECT_EQ(strides(pyramid), want) << "output stride " << os;
    for (std::size_t i = 0; i < pyramid.size(); ++i) {
      const auto& level = pyramid.at(i);
      EXPECT_EQ(level.map.size(2), 64 / level.stride);
      EXPECT_EQ(level.map.size(3), 64 / level.stride);
      EXPECT_EQ(level.map.size(1), level.channels);
      EXPECT_EQ(net->levels()[i].stride, level.stride);
      EXPECT_EQ(net->levels()[i].channels, level.channels);
    }
  }
}

TEST(ResNet, SamplesDoNotMixAcrossTheBatch) {
  auto net = resnet(18, 8);
  net->eval();
  torch::NoGradGuard guard;
  const auto batch = torch::randn({3, 3, 32, 32});
  const auto together = net->forward(batch);
  const auto alone = net->forward(batch.slice(0, 1, 2));
  for (std::size_t i = 0; i < together.size(); ++i) {
    // Batched convolution kernels round differently in float32.
    EXPECT_TRUE(torch::allclose(together.at(i).map.slice(0, 1, 2), alone.at(i).map, 1e-5, 1e-5)) << i;
  }
}

TEST(ResNet, ChannelWidths) {
  std::vector<std::int64_t> basic, bottleneck;
  for (const auto& l : resnet(18, 8)->levels()) basic.push_back(l.channels);
  for (const auto& l : resnet(50, 8)->levels()) bottleneck.push_back(l.channels);
  EXPECT_EQ(basic, (std::vector<std::int64_t>{16, 32, 64, 128}));
  EXPECT_EQ(bottleneck, (std::vector<std::int64_t>{64, 128, 256, 512}));
  std::vector<std::int64_t> full;
  for (const auto& l : resnet(101, 8, 1.0)->levels()) full.push_back(l.channels);
  EXPECT_EQ(full, (std::vector<std::int64_t>{256, 512, 1024, 2048}));
}

TEST(ResNet, ParameterShapesIgnoreOutputStride) {
  auto a = resnet(50, 8);
  auto b = resnet(50, 32);
  const auto pa = a->named_parameters();
  const auto pb = b->named_parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (const auto& item : pa) {
    ASSERT_TRUE(pb.contains(item.key()));
    EXPECT_EQ(item.value().sizes(), pb[item.key()].sizes()) << item.key();
  }
}

TEST(ResNet, OutIndicesSelectLevels) {
  ResNetOptions o;
  o.depth = 18;
  o.width_multiplier = 0.25;
  o.stage_blocks = {1, 1, 1, 1};
  o.out_indices = {1, 3};
  ResNetImpl net(o);
  torch::NoGradGuard guard;
  const auto pyramid = net.forward(torch::randn({1, 3, 32, 32}));
  EXPECT_EQ(strides(pyramid), (std::vector<std::int64_t>{8, 8}));
  EXPECT_EQ(pyramid.at(1).channels, 128);
}

TEST(ResNet, RegistryRejectsBadStride) {
  EXPECT_NE(error_code_of([] {
              build_backbone(ConfigNode::parse(R"({"type": "resnet", "depth": 18, "output_stride": 4})"));
            }),
            "none");
  EXPECT_NE(error_code_of([] { build_backbone(ConfigNode::parse(R"({"type": "resnet", "depth": 19})")); }), "none");
}

TEST(UNet, DecoderReturnsToFullResolution) {
  UNetOptions o;
  o.base_channels = 8;
  o.num_stages = 4;
  o.out_indices = {0, 1, 3};
  UNetImpl net(o);
  EXPECT_EQ(net.size_divisor(), 8);
  torch::NoGradGuard guard;
  net.eval();
  const auto pyramid = net.forward(torch::randn({2, 3, 64, 64}));
  ASSERT_EQ(pyramid.size(), 3u);
  EXPECT_EQ(strides(pyramid), (std::vector<std::int64_t>{1, 2, 8}));
  EXPECT_EQ(pyramid.at(0).map.sizes(), (std::vector<std::int64_t>{2, 8, 64, 64}));
  EXPECT_EQ(pyramid.at(1).map.sizes(), (std::vector<std::int64_t>{2, 16, 32, 32}));
  EXPECT_EQ(pyramid.at(2).map.sizes(), (std::vector<std::int64_t>{2, 64, 8, 8}));
}

TEST(Pretrained, LoadsNamedArraysAndChecksShapes) {
  testing::TempDir dir;
  auto source = resnet(18, 8);
  Archive archive;
  add_module_arrays(archive, *source, "backbone.");
  save_archive(dir / "weights.ckpt", archive);

  auto target = resnet(18, 16);
  const auto loaded = load_pretrained(*target, (dir / "weights.ckpt").string(), "backbone.");
  EXPECT_EQ(loaded, source->named_parameters().size() + source->named_buffers().size());
  for (const auto& item : source->named_parameters()) {
    EXPECT_TRUE(torch::equal(item.value(), target->named_parameters()[item.key()])) << item.key();
  }

  auto wider = resnet(18, 8, 0.5);
  EXPECT_EQ(error_code_of([&] { load_pretrained(*wider, (dir / "weights.ckpt").string(), "backbone."); }),
            "ShapeMismatch");
}

}  // namespace
}  // namespace sseg
