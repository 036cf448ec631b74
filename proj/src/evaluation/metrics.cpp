#include "sseg/evaluation/metrics.hpp"

#include <cstdio>

#include "sseg/core/errors.hpp"

namespace sseg {

ConfusionMatrix::ConfusionMatrix(std::int64_t num_classes)
    : k_(num_classes), counts_(static_cast<std::size_t>(num_classes * num_classes), 0) {
  check(num_classes >= 1, ErrorCode::ConfigError, "confusion matrix needs at least one class");
}

void ConfusionMatrix::update(const torch::Tensor& pred, const torch::Tensor& gt, std::int64_t ignore_index) {
  check(pred.sizes() == gt.sizes(), ErrorCode::ShapeError,
        "prediction " + c10::str(pred.sizes()) + " and ground truth " + c10::str(gt.sizes()) + " differ in shape");
  const auto p = pred.to(torch::kLong).flatten();
  const auto g = gt.to(torch::kLong).flatten();
  const auto valid = g != ignore_index;
  const auto bad_gt = valid.logical_and(g.lt(0).logical_or(g.ge(k_)));
  check(!bad_gt.any().item<bool>(), ErrorCode::LabelOutOfRange,
        "ground truth holds labels outside 0.." + std::to_string(k_ - 1) + " besides the ignore index");
  const auto bad_pred = valid.logical_and(p.lt(0).logical_or(p.ge(k_)));
  check(!bad_pred.any().item<bool>(), ErrorCode::LabelOutOfRange,
        "prediction holds labels outside 0.." + std::to_string(k_ - 1));
  const auto cells = (g.masked_select(valid) * k_ + p.masked_select(valid));
  const auto binned = torch::bincount(cells, {}, k_ * k_).to(torch::kLong).contiguous();
  const auto* data = binned.data_ptr<std::int64_t>();
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += static_cast<std::uint64_t>(data[i]);
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  check(other.k_ == k_, ErrorCode::ShapeError, "cannot merge confusion matrices of different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t sum = 0;
  for (const auto c : counts_) sum += c;
  return sum;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  const auto k = cm.num_classes();
  MetricsReport r;
  r.num_classes = k;
  r.total_pixels = cm.total();
  check(r.total_pixels > 0, ErrorCode::EmptyMatrix, "no pixels were evaluated");
  r.gt_pixels.assign(static_cast<std::size_t>(k), 0);
  r.pred_pixels.assign(static_cast<std::size_t>(k), 0);
  std::uint64_t trace = 0;
  for (std::int64_t g = 0; g < k; ++g) {
    for (std::int64_t p = 0; p < k; ++p) {
      r.gt_pixels[g] += cm.at(g, p);
      r.pred_pixels[p] += cm.at(g, p);
    }
    trace += cm.at(g, g);
  }
  double iou_sum = 0.0, acc_sum = 0.0;
  int iou_count = 0, acc_count = 0;
  for (std::int64_t c = 0; c < k; ++c) {
    const auto tp = static_cast<double>(cm.at(c, c));
    const auto uni = static_cast<double>(r.gt_pixels[c] + r.pred_pixels[c]) - tp;
    if (uni > 0) {
      r.per_class_iou.emplace_back(tp / uni);
      iou_sum += tp / uni;
      ++iou_count;
    } else {
      r.per_class_iou.emplace_back(std::nullopt);
    }
    if (r.gt_pixels[c] > 0) {
      r.per_class_acc.emplace_back(tp / static_cast<double>(r.gt_pixels[c]));
      acc_sum += *r.per_class_acc.back();
      ++acc_count;
    } else {
      r.per_class_acc.emplace_back(std::nullopt);
    }
  }
  r.miou = iou_count > 0 ? iou_sum / iou_count : 0.0;
  r.macc = acc_count > 0 ? acc_sum / acc_count : 0.0;
  r.aacc = static_cast<double>(trace) / static_cast<double>(r.total_pixels);
  return r;
}

namespace {

std::string class_label(const std::vector<std::string>& names, std::int64_t c) {
  return c < static_cast<std::int64_t>(names.size()) ? names[c] : "class_" + std::to_string(c);
}

ConfigNode optional_json(const std::optional<double>& v) { return v ? ConfigNode(*v) : ConfigNode(nullptr); }

}  // namespace

ConfigNode MetricsReport::to_json(const std::vector<std::string>& class_names) const {
  ConfigNode out = ConfigNode::object();
  out["definition"] = "global";
  out["miou"] = miou;
  out["aacc"] = aacc;
  out["macc"] = macc;
  out["total_pixels"] = total_pixels;
  ConfigNode rows = ConfigNode::array();
  for (std::int64_t c = 0; c < num_classes; ++c) {
    ConfigNode row = ConfigNode::object();
    row["index"] = c;
    row["name"] = class_label(class_names, c);
    row["iou"] = optional_json(per_class_iou[c]);
    row["acc"] = optional_json(per_class_acc[c]);
    row["gt_pixels"] = gt_pixels[c];
    row["pred_pixels"] = pred_pixels[c];
    rows.push_back(std::move(row));
  }
  out["classes"] = std::move(rows);
  return out;
}

std::string MetricsReport::to_text(const std::vector<std::string>& class_names) const {
  auto cell = [](const std::optional<double>& v) {
    char buf[32];
    if (!v) return std::string("     n/a");
    std::snprintf(buf, sizeof buf, "%8.2f", 100.0 * *v);
    return std::string(buf);
  };
  std::string out = "class                 IoU     Acc\n";
  for (std::int64_t c = 0; c < num_classes; ++c) {
    char name[24];
    std::snprintf(name, sizeof name, "%-16s", class_label(class_names, c).c_str());
    out += std::string(name) + cell(per_class_iou[c]) + cell(per_class_acc[c]) + "\n";
  }
  char summary[128];
  std::snprintf(summary, sizeof summary, "mIoU %.2f  aAcc %.2f  mAcc %.2f  (global, %llu pixels)\n", 100.0 * miou,
                100.0 * aacc, 100.0 * macc, static_cast<unsigned long long>(total_pixels));
  return out + summary;
}

}  // namespace sseg
