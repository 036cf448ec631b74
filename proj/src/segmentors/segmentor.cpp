#include "sseg/segmentors/segmentor.hpp"

#include "sseg/core/errors.hpp"
#include "sseg/datasets/sample.hpp"

namespace sseg {

EncoderDecoderImpl::EncoderDecoderImpl(BackbonePtr backbone_, HeadPtr decode_head_, HeadPtr aux_head_)
    : backbone(std::move(backbone_)), decode_head(std::move(decode_head_)), aux_head(std::move(aux_head_)) {
  check(backbone && decode_head, ErrorCode::ConfigError, "segmentor needs a backbone and a decode head");
  check(!decode_head->needs_soft_regions() || aux_head, ErrorCode::ConfigError,
        "this decode head takes its regions from the auxiliary head, which is disabled");
  check(!aux_head || aux_head->options().num_classes == decode_head->options().num_classes, ErrorCode::ConfigError,
        "auxiliary and decode heads disagree on num_classes");
  register_module("backbone", backbone);
  register_module("decode_head", decode_head);
  if (aux_head) register_module("aux_head", aux_head);
}

SegmentorOutput EncoderDecoderImpl::forward(const torch::Tensor& images, const torch::Tensor&) {
  check(images.dim() == 4, ErrorCode::ShapeError, "segmentor expects N×C×H×W images");
  const auto h = images.size(2);
  const auto w = images.size(3);
  const auto divisor = size_divisor();
  check(h % divisor == 0 && w % divisor == 0, ErrorCode::ShapeError,
        "input " + std::to_string(h) + "×" + std::to_string(w) + " is not divisible by " + std::to_string(divisor));

  SegmentorOutput out;
  const auto features = backbone->forward(images);
  torch::Tensor aux;
  if (aux_head) aux = aux_head->forward(features);
  const auto decoded = decode_head->decode(features, aux);
  const auto logits = decode_head->classify(decoded);
  out.main_logits = resize_bilinear(logits, h, w);
  if (aux.defined()) out.aux_logits.push_back(resize_bilinear(aux, h, w));
  if (record_internals()) {
    for (std::size_t i = 0; i < features.size(); ++i) out.internals["feature." + std::to_string(i)] = features.at(i).map;
    out.internals["decoded"] = decoded;
    out.internals["head_logits"] = logits;
    if (aux.defined()) out.internals["aux_head_logits"] = aux;
  }
  return out;
}

GroundTruthEchoImpl::GroundTruthEchoImpl(std::int64_t num_classes, std::int64_t ignore_index)
    : num_classes_(num_classes), ignore_index_(ignore_index) {
  check(num_classes >= 1, ErrorCode::ConfigError, "gt_echo needs num_classes >= 1");
}

SegmentorOutput GroundTruthEchoImpl::forward(const torch::Tensor& images, const torch::Tensor& masks) {
  check(masks.defined() && masks.dim() == 3, ErrorCode::ShapeError, "gt_echo needs N×H×W ground truth");
  check(masks.size(0) == images.size(0) && masks.size(1) == images.size(2) && masks.size(2) == images.size(3),
        ErrorCode::ShapeError, "gt_echo ground truth does not match the images");
  const auto labels = masks.masked_fill(masks == ignore_index_, 0).clamp(0, num_classes_ - 1);
  SegmentorOutput out;
  out.main_logits = torch::one_hot(labels, num_classes_).permute({0, 3, 1, 2}).to(images.scalar_type());
  return out;
}

ZeroLogitsImpl::ZeroLogitsImpl(std::int64_t num_classes) : num_classes_(num_classes) {
  check(num_classes >= 1, ErrorCode::ConfigError, "zero_logits needs num_classes >= 1");
}

SegmentorOutput ZeroLogitsImpl::forward(const torch::Tensor& images, const torch::Tensor&) {
  check(images.dim() == 4, ErrorCode::ShapeError, "segmentor expects N×C×H×W images");
  SegmentorOutput out;
  out.main_logits = torch::zeros({images.size(0), num_classes_, images.size(2), images.size(3)}, images.options());
  return out;
}

Registry<SegmentorPtr, const SegmentorContext&>& segmentor_registry() {
  static Registry<SegmentorPtr, const SegmentorContext&> registry = [] {
    Registry<SegmentorPtr, const SegmentorContext&> r("segmentor");
    for (const auto& type : head_types()) {
      r.add(type, [type](Params& p, const SegmentorContext& ctx) -> SegmentorPtr {
        check(!ctx.backbone.is_null(), ErrorCode::ConfigError, "model.backbone is required for '" + type + "'");
        auto backbone = build_backbone(ctx.backbone);
        const auto levels = backbone->levels();
        HeadPtr aux;
        if (!p.has("aux") || !p.node().at("aux").is_null()) {
          auto aux_node = p.get_node("aux");
          if (aux_node.is_null()) aux_node = ConfigNode::object();
          check(aux_node.is_object(), ErrorCode::InvalidParams, "segmentor/" + type + ": aux must be a mapping or null");
          Params aux_params(aux_node, "segmentor/" + type + "/aux");
          aux = build_aux_head(aux_params, levels, ctx.num_classes);
          aux_params.finish();
        } else {
          p.is_null("aux");
        }
        auto head = build_head(type, p, levels, ctx.num_classes);
        return std::make_shared<EncoderDecoderImpl>(std::move(backbone), std::move(head), std::move(aux));
      });
    }
    r.add("gt_echo", [](Params& p, const SegmentorContext& ctx) -> SegmentorPtr {
      return std::make_shared<GroundTruthEchoImpl>(ctx.num_classes, p.get<std::int64_t>("ignore_index", kDefaultIgnoreIndex));
    });
    r.add("zero_logits", [](Params&, const SegmentorContext& ctx) -> SegmentorPtr {
      return std::make_shared<ZeroLogitsImpl>(ctx.num_classes);
    });
    return r;
  }();
  return registry;
}

SegmentorPtr build_segmentor(const ConfigNode& model) {
  check(model.is_object(), ErrorCode::ConfigError, "model section must be a mapping");
  Params p(model, "model");
  SegmentorContext ctx;
  ctx.num_classes = p.require<std::int64_t>("num_classes");
  ctx.backbone = p.get_node("backbone");
  const auto segmentor = p.get_node("segmentor");
  check(!segmentor.is_null(), ErrorCode::ConfigError, "model.segmentor is required");
  p.finish();
  check(ctx.num_classes >= 1, ErrorCode::ConfigError, "model.num_classes must be >= 1");
  return segmentor_registry().build(segmentor, ctx);
}

}  // namespace sseg
