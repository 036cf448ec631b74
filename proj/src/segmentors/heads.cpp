#include "sseg/segmentors/heads.hpp"

#include <algorithm>
#include <functional>
#include <map>

#include "sseg/core/errors.hpp"

namespace sseg {

DecodeHeadImpl::DecodeHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels)
    : options_(options), levels_(std::move(levels)) {
  check(options_.num_classes >= 1, ErrorCode::ConfigError, "decode head needs num_classes >= 1");
  check(options_.channels >= 1, ErrorCode::ConfigError, "decode head needs channels >= 1");
  check(options_.dropout >= 0.0 && options_.dropout < 1.0, ErrorCode::ConfigError, "dropout must lie in [0, 1)");
  level_index(options_.in_index);
  dropout = register_module("dropout", torch::nn::Dropout2d(torch::nn::Dropout2dOptions(options_.dropout)));
  classifier = register_module("classifier",
                               torch::nn::Conv2d(torch::nn::Conv2dOptions(options_.channels, options_.num_classes, 1)));
  init_normal(*classifier, 0.01);
}

std::size_t DecodeHeadImpl::level_index(std::int64_t index) const {
  const auto count = static_cast<std::int64_t>(levels_.size());
  const auto resolved = index < 0 ? count + index : index;
  check(resolved >= 0 && resolved < count, ErrorCode::ConfigError,
        "head requests pyramid level " + std::to_string(index) + " but the backbone emits " +
            std::to_string(count) + " level(s)");
  return static_cast<std::size_t>(resolved);
}

const torch::Tensor& DecodeHeadImpl::input(const FeaturePyramid& features, std::int64_t index) const {
  const auto i = level_index(index);
  check(features.size() == levels_.size(), ErrorCode::ShapeError,
        "head expected " + std::to_string(levels_.size()) + " pyramid levels, got " + std::to_string(features.size()));
  const auto& map = features.at(i).map;
  check(map.dim() == 4 && map.size(1) == levels_[i].channels, ErrorCode::ShapeError,
        "pyramid level " + std::to_string(i) + " has the wrong channel count");
  return map;
}

torch::Tensor DecodeHeadImpl::classify(const torch::Tensor& decoded) { return classifier->forward(dropout->forward(decoded)); }

torch::Tensor DecodeHeadImpl::forward(const FeaturePyramid& features, const torch::Tensor& soft_regions) {
  return classify(decode(features, soft_regions));
}

FCNHeadImpl::FCNHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels, int num_convs,
                         std::int64_t kernel_size)
    : DecodeHeadImpl(options, std::move(levels)) {
  check(num_convs >= 0, ErrorCode::ConfigError, "fcn head needs num_convs >= 0");
  const auto in = level(options.in_index).channels;
  check(num_convs > 0 || in == options.channels, ErrorCode::ConfigError,
        "fcn head without convs needs channels equal to the input width");
  convs_ = register_module("convs", torch::nn::Sequential());
  for (int i = 0; i < num_convs; ++i) {
    convs_->push_back(ConvModule(ConvModuleOptions(i == 0 ? in : options.channels, options.channels, kernel_size)));
  }
}

torch::Tensor FCNHeadImpl::decode(const FeaturePyramid& features, const torch::Tensor&) {
  const auto& x = input(features, options().in_index);
  return convs_->size() == 0 ? x : convs_->forward(x);
}

PSPHeadImpl::PSPHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels, std::vector<std::int64_t> bins)
    : DecodeHeadImpl(options, std::move(levels)) {
  ppm = register_module("ppm", PyramidPooling(level(options.in_index).channels, options.channels, std::move(bins)));
}

torch::Tensor PSPHeadImpl::decode(const FeaturePyramid& features, const torch::Tensor&) {
  return ppm->forward(input(features, options().in_index));
}

ASPPHeadImpl::ASPPHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels, std::vector<std::int64_t> rates,
                           bool with_global)
    : DecodeHeadImpl(options, std::move(levels)) {
  aspp = register_module("aspp",
                         AtrousPyramid(level(options.in_index).channels, options.channels, std::move(rates), with_global));
}

torch::Tensor ASPPHeadImpl::decode(const FeaturePyramid& features, const torch::Tensor&) {
  return aspp->forward(input(features, options().in_index));
}

DeeplabV3PlusHeadImpl::DeeplabV3PlusHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels,
                                             std::vector<std::int64_t> rates, std::int64_t low_level_index,
                                             std::int64_t low_channels)
    : DecodeHeadImpl(options, std::move(levels)), low_level_index_(low_level_index) {
  aspp = register_module("aspp", AtrousPyramid(level(options.in_index).channels, options.channels, std::move(rates), true));
  decoder = register_module(
      "decoder", PlusDecoder(options.channels, level(low_level_index).channels, low_channels, options.channels));
}

torch::Tensor DeeplabV3PlusHeadImpl::decode(const FeaturePyramid& features, const torch::Tensor&) {
  return decoder->forward(aspp->forward(input(features, options().in_index)), input(features, low_level_index_));
}

UPerHeadImpl::UPerHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels, std::vector<std::int64_t> bins)
    : DecodeHeadImpl(options, levels) {
  std::vector<std::int64_t> widths;
  for (const auto& info : levels) widths.push_back(info.channels);
  fusion = register_module("fusion", UPerFusion(widths, options.channels, std::move(bins)));
}

torch::Tensor UPerHeadImpl::decode(const FeaturePyramid& features, const torch::Tensor&) {
  std::vector<torch::Tensor> maps;
  for (std::size_t i = 0; i < features.size(); ++i) maps.push_back(input(features, static_cast<std::int64_t>(i)));
  return fusion->forward(maps);
}

NLHeadImpl::NLHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels)
    : DecodeHeadImpl(options, std::move(levels)) {
  const auto in = level(options.in_index).channels;
  reduce_ = register_module("reduce", ConvModule(ConvModuleOptions(in, options.channels, 3)));
  block = register_module("block", NonLocalBlock(options.channels));
  post_ = register_module("post", ConvModule(ConvModuleOptions(options.channels, options.channels, 3)));
  fuse_ = register_module("fuse", ConvModule(ConvModuleOptions(in + options.channels, options.channels, 3)));
}

torch::Tensor NLHeadImpl::decode(const FeaturePyramid& features, const torch::Tensor&) {
  const auto& x = input(features, options().in_index);
  const auto y = post_->forward(block->forward(reduce_->forward(x)));
  return fuse_->forward(torch::cat({x, y}, 1));
}

CCHeadImpl::CCHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels, int recurrence)
    : DecodeHeadImpl(options, std::move(levels)), recurrence_(recurrence) {
  check(recurrence >= 1, ErrorCode::ConfigError, "criss-cross recurrence must be >= 1");
  const auto in = level(options.in_index).channels;
  reduce_ = register_module("reduce", ConvModule(ConvModuleOptions(in, options.channels, 3)));
  attention = register_module("attention", CrissCrossAttention(options.channels));
  post_ = register_module("post", ConvModule(ConvModuleOptions(options.channels, options.channels, 3)));
  fuse_ = register_module("fuse", ConvModule(ConvModuleOptions(in + options.channels, options.channels, 3)));
}

torch::Tensor CCHeadImpl::decode(const FeaturePyramid& features, const torch::Tensor&) {
  const auto& x = input(features, options().in_index);
  auto y = reduce_->forward(x);
  for (int r = 0; r < recurrence_; ++r) y = attention->forward(y);
  return fuse_->forward(torch::cat({x, post_->forward(y)}, 1));
}

OCRHeadImpl::OCRHeadImpl(const HeadOptions& options, std::vector<LevelInfo> levels, std::int64_t key_channels)
    : DecodeHeadImpl(options, std::move(levels)) {
  const auto in = level(options.in_index).channels;
  const auto keys = key_channels > 0 ? key_channels : std::max<std::int64_t>(1, options.channels / 2);
  bottleneck_ = register_module("bottleneck", ConvModule(ConvModuleOptions(in, options.channels, 3)));
  object_attention = register_module("object_attention", ObjectAttention(options.channels, keys, options.channels));
}

torch::Tensor OCRHeadImpl::regions(const torch::Tensor& features, const torch::Tensor& soft_regions) const {
  check(soft_regions.defined() && soft_regions.dim() == 4 && soft_regions.size(1) == options().num_classes,
        ErrorCode::ShapeError, "ocr head needs N×K×h×w soft regions with K = num_classes");
  const auto n = soft_regions.size(0);
  const auto k = soft_regions.size(1);
  const auto resized = resize_bilinear(soft_regions, features.size(2), features.size(3));
  const auto weights = torch::softmax(resized.reshape({n, k, -1}), -1).reshape_as(resized);
  return region_pool(features, weights);
}

torch::Tensor OCRHeadImpl::decode(const FeaturePyramid& features, const torch::Tensor& soft_regions) {
  const auto x = bottleneck_->forward(input(features, options().in_index));
  return object_attention->forward(x, regions(x, soft_regions));
}

namespace {

using HeadFactory = std::function<HeadPtr(Params&, const std::vector<LevelInfo>&, const HeadOptions&)>;

std::vector<std::int64_t> default_rates(std::int64_t stride) {
  if (stride <= 8) return {12, 24, 36};
  if (stride <= 16) return {6, 12, 18};
  return {3, 6, 9};
}

std::int64_t default_low_level(const std::vector<LevelInfo>& levels) {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i].stride == 4) return static_cast<std::int64_t>(i);
  }
  fail(ErrorCode::ConfigError, "deeplabv3plus needs a stride-4 pyramid level (or an explicit low_level_index)");
}

const std::map<std::string, HeadFactory>& head_factories() {
  static const std::map<std::string, HeadFactory> factories = {
      {"fcn",
       [](Params& p, const std::vector<LevelInfo>& levels, const HeadOptions& o) -> HeadPtr {
         return std::make_shared<FCNHeadImpl>(o, levels, p.get<int>("num_convs", 2),
                                              p.get<std::int64_t>("kernel_size", 3));
       }},
      {"pspnet",
       [](Params& p, const std::vector<LevelInfo>& levels, const HeadOptions& o) -> HeadPtr {
         return std::make_shared<PSPHeadImpl>(o, levels,
                                              p.get<std::vector<std::int64_t>>("bins", {1, 2, 3, 6}));
       }},
      {"deeplabv3",
       [](Params& p, const std::vector<LevelInfo>& levels, const HeadOptions& o) -> HeadPtr {
         const auto stride = levels.at(levels.size() - 1).stride;
         auto rates = p.get<std::vector<std::int64_t>>("rates", default_rates(stride));
         return std::make_shared<ASPPHeadImpl>(o, levels, std::move(rates), p.get<bool>("with_global", true));
       }},
      {"deeplabv3plus",
       [](Params& p, const std::vector<LevelInfo>& levels, const HeadOptions& o) -> HeadPtr {
         const auto stride = levels.at(levels.size() - 1).stride;
         auto rates = p.get<std::vector<std::int64_t>>("rates", default_rates(stride));
         const auto low = p.has("low_level_index") ? p.require<std::int64_t>("low_level_index") : default_low_level(levels);
         return std::make_shared<DeeplabV3PlusHeadImpl>(o, levels, std::move(rates), low,
                                                        p.get<std::int64_t>("low_level_channels", 48));
       }},
      {"upernet",
       [](Params& p, const std::vector<LevelInfo>& levels, const HeadOptions& o) -> HeadPtr {
         return std::make_shared<UPerHeadImpl>(o, levels, p.get<std::vector<std::int64_t>>("bins", {1, 2, 3, 6}));
       }},
      {"nonlocal",
       [](Params&, const std::vector<LevelInfo>& levels, const HeadOptions& o) -> HeadPtr {
         return std::make_shared<NLHeadImpl>(o, levels);
       }},
      {"ccnet",
       [](Params& p, const std::vector<LevelInfo>& levels, const HeadOptions& o) -> HeadPtr {
         return std::make_shared<CCHeadImpl>(o, levels, p.get<int>("recurrence", 2));
       }},
      {"ocrnet",
       [](Params& p, const std::vector<LevelInfo>& levels, const HeadOptions& o) -> HeadPtr {
         return std::make_shared<OCRHeadImpl>(o, levels, p.get<std::int64_t>("key_channels", 0));
       }},
  };
  return factories;
}

}  // namespace

const std::vector<std::string>& head_types() {
  static const std::vector<std::string> types = [] {
    std::vector<std::string> out;
    for (const auto& [name, factory] : head_factories()) out.push_back(name);
    return out;
  }();
  return types;
}

HeadPtr build_head(const std::string& type, Params& params, const std::vector<LevelInfo>& levels,
                   std::int64_t num_classes) {
  const auto& factories = head_factories();
  const auto it = factories.find(type);
  check(it != factories.end(), ErrorCode::UnknownType, "unknown decode head '" + type + "'");
  check(!levels.empty(), ErrorCode::ConfigError, "backbone emits no feature levels");
  HeadOptions o;
  o.num_classes = num_classes;
  o.channels = params.get<std::int64_t>("channels", o.channels);
  o.dropout = params.get<double>("dropout", o.dropout);
  o.in_index = params.get<std::int64_t>("in_index", o.in_index);
  return it->second(params, levels, o);
}

std::int64_t default_aux_index(const std::vector<LevelInfo>& levels) {
  return levels.size() >= 3 ? 2 : static_cast<std::int64_t>(levels.size()) - 1;
}

HeadPtr build_aux_head(Params& params, const std::vector<LevelInfo>& levels, std::int64_t num_classes) {
  HeadOptions o;
  o.num_classes = num_classes;
  o.channels = params.get<std::int64_t>("channels", 16);
  o.dropout = params.get<double>("dropout", 0.1);
  o.in_index = params.get<std::int64_t>("in_index", default_aux_index(levels));
  return std::make_shared<FCNHeadImpl>(o, levels, params.get<int>("num_convs", 1));
}

}  // namespace sseg
