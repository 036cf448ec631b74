#include "sseg/datasets/transforms.hpp"

#include <algorithm>
#include <cmath>

#include "sseg/core/errors.hpp"

namespace sseg {
namespace {

namespace F = torch::nn::functional;

std::array<std::int64_t, 2> read_hw(Params& params, const std::string& key) {
  const ConfigNode node = params.get_node(key);
  if (node.is_number_integer()) {
    const auto v = node.get<std::int64_t>();
    return {v, v};
  }
  if (node.is_array() && node.size() == 2 && node[0].is_number_integer() &&
      node[1].is_number_integer()) {
    return {node[0].get<std::int64_t>(), node[1].get<std::int64_t>()};
  }
  fail(ErrorCode::InvalidParams, params.context() + ": '" + key + "' must be an int or [h, w]");
}

std::vector<double> read_triplet(Params& params, const std::string& key, double fallback) {
  const ConfigNode node = params.get_node(key);
  if (node.is_null()) return {fallback, fallback, fallback};
  if (node.is_number()) {
    const auto v = node.get<double>();
    return {v, v, v};
  }
  if (node.is_array()) {
    std::vector<double> out;
    for (const auto& v : node) {
      if (!v.is_number()) break;
      out.push_back(v.get<double>());
    }
    if (out.size() == node.size() && !out.empty()) return out;
  }
  fail(ErrorCode::InvalidParams, params.context() + ": '" + key + "' must be a number or list");
}

void sync_size(SegSample& s) { s.meta.current_size = {s.image.size(1), s.image.size(2)}; }

}  // namespace

torch::Tensor resize_mask_nearest(const torch::Tensor& mask, std::int64_t height, std::int64_t width) {
  const auto in_h = mask.size(0);
  const auto in_w = mask.size(1);
  auto rows = ((torch::arange(height, torch::kFloat64) + 0.5) * (static_cast<double>(in_h) / height))
                  .floor()
                  .clamp_max(in_h - 1)
                  .to(torch::kInt64);
  auto cols = ((torch::arange(width, torch::kFloat64) + 0.5) * (static_cast<double>(in_w) / width))
                  .floor()
                  .clamp_max(in_w - 1)
                  .to(torch::kInt64);
  return mask.index_select(0, rows).index_select(1, cols).contiguous();
}

Resize::Resize(std::array<std::int64_t, 2> target, bool keep_ratio,
               std::optional<std::array<double, 2>> ratio_range)
    : target_(target), keep_ratio_(keep_ratio), ratio_range_(ratio_range) {
  check(target_[0] > 0 && target_[1] > 0, ErrorCode::BadPipeline, "Resize target must be positive");
  if (ratio_range_) {
    check((*ratio_range_)[0] > 0 && (*ratio_range_)[0] <= (*ratio_range_)[1], ErrorCode::BadPipeline,
          "Resize ratio_range must satisfy 0 < lo <= hi");
  }
}

std::array<std::int64_t, 2> Resize::output_size(std::array<std::int64_t, 2> size, double ratio) const {
  const double th = target_[0] * ratio;
  const double tw = target_[1] * ratio;
  if (!keep_ratio_) {
    return {std::max<std::int64_t>(1, std::llround(th)), std::max<std::int64_t>(1, std::llround(tw))};
  }
  const double scale = std::min(th / size[0], tw / size[1]);
  return {std::max<std::int64_t>(1, static_cast<std::int64_t>(size[0] * scale + 0.5)),
          std::max<std::int64_t>(1, static_cast<std::int64_t>(size[1] * scale + 0.5))};
}

SegSample Resize::apply(SegSample s, Rng& rng) const {
  double ratio = 1.0;
  if (ratio_range_) ratio = rng.uniform((*ratio_range_)[0], (*ratio_range_)[1]);
  const auto [h, w] = output_size({s.image.size(1), s.image.size(2)}, ratio);
  if (h == s.image.size(1) && w == s.image.size(2)) return s;
  s.image = F::interpolate(s.image.unsqueeze(0), F::InterpolateFuncOptions()
                                                     .size(std::vector<std::int64_t>{h, w})
                                                     .mode(torch::kBilinear)
                                                     .align_corners(false))
                .squeeze(0)
                .contiguous();
  s.mask = resize_mask_nearest(s.mask, h, w);
  sync_size(s);
  return s;
}

RandomCrop::RandomCrop(std::array<std::int64_t, 2> size, double max_category_ratio,
                       std::int64_t ignore_index)
    : size_(size), max_category_ratio_(max_category_ratio), ignore_index_(ignore_index) {
  check(size_[0] > 0 && size_[1] > 0, ErrorCode::BadPipeline, "RandomCrop size must be positive");
  check(max_category_ratio_ > 0 && max_category_ratio_ <= 1.0, ErrorCode::BadPipeline,
        "RandomCrop max_category_ratio must be in (0, 1]");
}

SegSample RandomCrop::apply(SegSample s, Rng& rng) const {
  const auto H = s.image.size(1);
  const auto W = s.image.size(2);
  const auto ch = std::min(size_[0], H);
  const auto cw = std::min(size_[1], W);
  std::int64_t y0 = 0;
  std::int64_t x0 = 0;
  for (int draw = 0; draw < kMaxRedraws; ++draw) {
    y0 = rng.uniform_int(0, H - ch);
    x0 = rng.uniform_int(0, W - cw);
    if (max_category_ratio_ >= 1.0) break;
    const auto window = s.mask.slice(0, y0, y0 + ch).slice(1, x0, x0 + cw);
    const auto labeled = window.masked_select(window != ignore_index_);
    if (labeled.numel() == 0) break;
    const auto counts = torch::bincount(labeled);
    const double largest = counts.max().item<double>();
    if (largest / static_cast<double>(labeled.numel()) < max_category_ratio_) break;
  }
  s.image = s.image.slice(1, y0, y0 + ch).slice(2, x0, x0 + cw).contiguous();
  s.mask = s.mask.slice(0, y0, y0 + ch).slice(1, x0, x0 + cw).contiguous();
  s.meta.crop_offset = std::array<std::int64_t, 2>{y0, x0};
  sync_size(s);
  return s;
}

RandomFlip::RandomFlip(double prob) : prob_(prob) {
  check(prob_ >= 0.0 && prob_ <= 1.0, ErrorCode::BadPipeline, "RandomFlip prob must be in [0, 1]");
}

SegSample RandomFlip::apply(SegSample s, Rng& rng) const {
  if (rng.uniform() < prob_) {
    s.image = s.image.flip({2}).contiguous();
    s.mask = s.mask.flip({1}).contiguous();
    s.meta.flipped = !s.meta.flipped;
  }
  return s;
}

Normalize::Normalize(std::vector<double> mean, std::vector<double> std)
    : mean_(std::move(mean)), std_(std::move(std)) {
  check(mean_.size() == std_.size() && !mean_.empty(), ErrorCode::BadPipeline,
        "Normalize mean/std lengths differ");
  for (double v : std_) check(v > 0, ErrorCode::BadPipeline, "Normalize std must be positive");
}

SegSample Normalize::apply(SegSample s, Rng&) const {
  check(static_cast<std::size_t>(s.image.size(0)) == mean_.size(), ErrorCode::BadPipeline,
        "Normalize channel count does not match the image");
  const auto mean = torch::tensor(mean_, torch::kFloat64).to(torch::kFloat32).view({-1, 1, 1});
  const auto std = torch::tensor(std_, torch::kFloat64).to(torch::kFloat32).view({-1, 1, 1});
  s.image = ((s.image - mean) / std).contiguous();
  return s;
}

Pad::Pad(std::array<std::int64_t, 2> size, double pad_value, std::int64_t seg_pad_value)
    : size_(size), pad_value_(pad_value), seg_pad_value_(seg_pad_value) {
  check(size_[0] > 0 && size_[1] > 0, ErrorCode::BadPipeline, "Pad size must be positive");
}

SegSample Pad::apply(SegSample s, Rng&) const {
  const auto H = s.image.size(1);
  const auto W = s.image.size(2);
  const auto ph = std::max<std::int64_t>(0, size_[0] - H);
  const auto pw = std::max<std::int64_t>(0, size_[1] - W);
  if (ph == 0 && pw == 0) return s;
  s.image = F::pad(s.image, F::PadFuncOptions({0, pw, 0, ph}).value(pad_value_));
  s.mask = F::pad(s.mask, F::PadFuncOptions({0, pw, 0, ph}).value(static_cast<double>(seg_pad_value_)));
  sync_size(s);
  return s;
}

Registry<TransformPtr>& transform_registry() {
  static Registry<TransformPtr> registry = [] {
    Registry<TransformPtr> r("transform");
    r.add("Resize", [](Params& p) -> TransformPtr {
      std::optional<std::array<double, 2>> range;
      const auto node = p.get_node("ratio_range");
      if (!node.is_null()) {
        if (!node.is_array() || node.size() != 2 || !node[0].is_number() || !node[1].is_number()) {
          fail(ErrorCode::InvalidParams, p.context() + ": ratio_range must be [lo, hi]");
        }
        range = std::array<double, 2>{node[0].get<double>(), node[1].get<double>()};
      }
      return std::make_shared<Resize>(read_hw(p, "target"), p.get<bool>("keep_ratio", true), range);
    });
    r.add("RandomCrop", [](Params& p) -> TransformPtr {
      return std::make_shared<RandomCrop>(read_hw(p, "size"), p.get<double>("max_category_ratio", 0.75),
                                          p.get<std::int64_t>("ignore_index", kDefaultIgnoreIndex));
    });
    r.add("RandomFlip", [](Params& p) -> TransformPtr {
      return std::make_shared<RandomFlip>(p.get<double>("prob", 0.5));
    });
    r.add("Normalize", [](Params& p) -> TransformPtr {
      return std::make_shared<Normalize>(read_triplet(p, "mean", 0.5), read_triplet(p, "std", 0.5));
    });
    r.add("Pad", [](Params& p) -> TransformPtr {
      return std::make_shared<Pad>(read_hw(p, "size"), p.get<double>("pad_value", 0.0),
                                   p.get<std::int64_t>("seg_pad_value", kDefaultIgnoreIndex));
    });
    return r;
  }();
  return registry;
}

Pipeline Pipeline::build(const ConfigNode& list) {
  if (list.is_null()) return Pipeline();
  check(list.is_array(), ErrorCode::BadPipeline, "pipeline must be a list of transforms");
  std::vector<TransformPtr> steps;
  for (const auto& node : list) {
    try {
      steps.push_back(transform_registry().build(node));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::BadPipeline) throw;
      fail(ErrorCode::BadPipeline, e.what());
    }
  }
  return Pipeline(std::move(steps));
}

SegSample Pipeline::operator()(SegSample sample, Rng& rng) const {
  for (const auto& step : steps_) sample = step->apply(std::move(sample), rng);
  return sample;
}

SegSample apply_pipeline(SegSample sample, const ConfigNode& pipeline, Rng& rng) {
  return Pipeline::build(pipeline)(std::move(sample), rng);
}

}  // namespace sseg
