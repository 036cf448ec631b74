#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sseg/backbones/backbone.hpp"
#include "sseg/core/config.hpp"
#include "sseg/core/registry.hpp"
#include "sseg/segmentors/heads.hpp"

namespace sseg {

struct SegmentorOutput {
  torch::Tensor main_logits;               // N×K×H×W at input resolution
  std::vector<torch::Tensor> aux_logits;   // each N×K×H×W
  std::map<std::string, torch::Tensor> internals;
};

/// Full model: images (and, for debug models, ground truth) -> per-class logits.
class SegmentorImpl : public torch::nn::Module {
 public:
  virtual SegmentorOutput forward(const torch::Tensor& images, const torch::Tensor& masks = {}) = 0;
  virtual std::int64_t num_classes() const = 0;
  /// Input sides must be multiples of this.
  virtual std::int64_t size_divisor() const { return 1; }

  /// When set, forward fills `internals` with intermediate maps.
  void set_record_internals(bool on) { record_internals_ = on; }
  bool record_internals() const { return record_internals_; }

 private:
  bool record_internals_ = false;
};

using SegmentorPtr = std::shared_ptr<SegmentorImpl>;

/// backbone -> decode head (+ optional auxiliary FCN head), logits upsampled bilinearly to the
/// input size. Parameter names start with `backbone.`, `decode_head.` or `aux_head.`.
class EncoderDecoderImpl : public SegmentorImpl {
 public:
  EncoderDecoderImpl(BackbonePtr backbone, HeadPtr decode_head, HeadPtr aux_head);

  SegmentorOutput forward(const torch::Tensor& images, const torch::Tensor& masks = {}) override;
  std::int64_t num_classes() const override { return decode_head->options().num_classes; }
  std::int64_t size_divisor() const override { return backbone->size_divisor(); }

  BackbonePtr backbone;
  HeadPtr decode_head;
  HeadPtr aux_head;  // may be null
};

/// Emits one-hot logits of the ground truth (ignored pixels map to class 0). Used to check the
/// evaluation plumbing end to end.
class GroundTruthEchoImpl : public SegmentorImpl {
 public:
  explicit GroundTruthEchoImpl(std::int64_t num_classes, std::int64_t ignore_index);
  SegmentorOutput forward(const torch::Tensor& images, const torch::Tensor& masks = {}) override;
  std::int64_t num_classes() const override { return num_classes_; }

 private:
  std::int64_t num_classes_;
  std::int64_t ignore_index_;
};

/// All-zero logits; argmax is class 0 everywhere.
class ZeroLogitsImpl : public SegmentorImpl {
 public:
  explicit ZeroLogitsImpl(std::int64_t num_classes);
  SegmentorOutput forward(const torch::Tensor& images, const torch::Tensor& masks = {}) override;
  std::int64_t num_classes() const override { return num_classes_; }

 private:
  std::int64_t num_classes_;
};

struct SegmentorContext {
  ConfigNode backbone;  // backbone spec (null for debug segmentors)
  std::int64_t num_classes = 0;
};

/// Types: every head in head_types(), plus the debug models "gt_echo" and "zero_logits".
/// Head types accept an `aux` mapping; it defaults to an auxiliary FCN head and null disables
/// it (not allowed for ocrnet, whose regions come from the auxiliary logits).
Registry<SegmentorPtr, const SegmentorContext&>& segmentor_registry();

/// Builds from the `model` section: {num_classes, backbone: {...}, segmentor: {type, ...}}.
SegmentorPtr build_segmentor(const ConfigNode& model);

}  // namespace sseg
