#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sseg/core/config.hpp"
#include "sseg/datasets/sample.hpp"

namespace sseg {

/// K×K pixel counts; rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::int64_t num_classes);

  /// Adds every pixel whose ground truth is not `ignore_index`. `pred` and `gt` are H×W (or
  /// any equal shape) integer tensors. Throws LabelOutOfRange for predictions outside 0..K-1
  /// or ground truth outside 0..K-1 ∪ {ignore_index}; the matrix is unchanged on error.
  void update(const torch::Tensor& pred, const torch::Tensor& gt, std::int64_t ignore_index = kDefaultIgnoreIndex);
  void merge(const ConfusionMatrix& other);

  std::int64_t num_classes() const { return k_; }
  std::uint64_t at(std::int64_t gt, std::int64_t pred) const { return counts_.at(static_cast<std::size_t>(gt * k_ + pred)); }
  std::uint64_t& at(std::int64_t gt, std::int64_t pred) { return counts_.at(static_cast<std::size_t>(gt * k_ + pred)); }
  std::uint64_t total() const;
  const std::vector<std::uint64_t>& counts() const { return counts_; }

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::int64_t k_;
  std::vector<std::uint64_t> counts_;
};

/// Metrics of one accumulated (global) confusion matrix. A class's IoU is undefined when it
/// occurs in neither ground truth nor prediction, and its accuracy when it is absent from the
/// ground truth; undefined entries are left out of the means.
struct MetricsReport {
  std::int64_t num_classes = 0;
  std::vector<std::optional<double>> per_class_iou;
  std::vector<std::optional<double>> per_class_acc;
  double miou = 0.0;
  double aacc = 0.0;
  double macc = 0.0;
  std::uint64_t total_pixels = 0;
  std::vector<std::uint64_t> gt_pixels;
  std::vector<std::uint64_t> pred_pixels;

  /// Structured form, one row per class. `class_names` may be empty.
  ConfigNode to_json(const std::vector<std::string>& class_names = {}) const;
  /// Human-readable table.
  std::string to_text(const std::vector<std::string>& class_names = {}) const;
};

/// IoU_k = cm[k][k] / (row_k + col_k − cm[k][k]); aAcc = trace / total; acc_k = cm[k][k] / row_k.
/// Throws EmptyMatrix when no pixel was counted.
MetricsReport compute_metrics(const ConfusionMatrix& cm);

}  // namespace sseg
