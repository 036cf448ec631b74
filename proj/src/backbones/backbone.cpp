#include "sseg/backbones/backbone.hpp"

#include "sseg/backbones/resnet.hpp"
#include "sseg/backbones/unet.hpp"
#include "sseg/core/errors.hpp"
#include "sseg/engine/archive.hpp"

namespace sseg {
namespace {

BackbonePtr finish_backbone(BackbonePtr backbone, Params& p) {
  const auto pretrained = p.get<std::string>("pretrained", "");
  const auto prefix = p.get<std::string>("pretrained_prefix", "");
  if (!pretrained.empty()) load_pretrained(*backbone, pretrained, prefix);
  return backbone;
}

}  // namespace

Registry<BackbonePtr>& backbone_registry() {
  static Registry<BackbonePtr> registry = [] {
    Registry<BackbonePtr> r("backbone");
    r.add("resnet", [](Params& p) -> BackbonePtr {
      ResNetOptions o;
      o.depth = p.get<int>("depth", o.depth);
      o.output_stride = p.get<std::int64_t>("output_stride", o.output_stride);
      o.out_indices = p.get<std::vector<std::int64_t>>("out_indices", o.out_indices);
      o.width_multiplier = p.get<double>("width_multiplier", o.width_multiplier);
      o.stage_blocks = p.get<std::vector<int>>("stage_blocks", o.stage_blocks);
      o.in_channels = p.get<std::int64_t>("in_channels", o.in_channels);
      o.zero_init_residual = p.get<bool>("zero_init_residual", o.zero_init_residual);
      return finish_backbone(std::make_shared<ResNetImpl>(o), p);
    });
    r.add("unet", [](Params& p) -> BackbonePtr {
      UNetOptions o;
      o.base_channels = p.get<std::int64_t>("base_channels", o.base_channels);
      o.num_stages = p.get<int>("num_stages", o.num_stages);
      o.width_multiplier = p.get<double>("width_multiplier", o.width_multiplier);
      o.in_channels = p.get<std::int64_t>("in_channels", o.in_channels);
      o.out_indices = p.get<std::vector<std::int64_t>>("out_indices", o.out_indices);
      return finish_backbone(std::make_shared<UNetImpl>(o), p);
    });
    return r;
  }();
  return registry;
}

std::size_t load_pretrained(torch::nn::Module& module, const std::string& path, const std::string& prefix) {
  const Archive archive = load_archive(path);
  std::size_t loaded = 0;
  std::string mismatches;
  torch::NoGradGuard guard;
  auto assign = [&](const std::string& name, torch::Tensor& target) {
    const auto source = archive.find(prefix + name);
    if (!source.defined()) return;
    if (source.sizes() != target.sizes()) {
      mismatches += "\n  " + name + ": archive " + c10::str(source.sizes()) + " vs model " + c10::str(target.sizes());
      return;
    }
    target.copy_(source);
    ++loaded;
  };
  for (auto& item : module.named_parameters()) assign(item.key(), item.value());
  for (auto& item : module.named_buffers()) assign(item.key(), item.value());
  if (!mismatches.empty()) fail(ErrorCode::ShapeMismatch, "pretrained weights from " + path + ":" + mismatches);
  return loaded;
}

}  // namespace sseg
