#include "maskforge/evalmetrics.hpp"

#include <stdexcept>
#include <string>

namespace maskforge {

void ConfusionMatrix::accumulate(const LabelMask& predicted, const LabelMask& truth) {
  if (!predicted.same_shape(truth)) {
    throw std::invalid_argument(
        "prediction is " + std::to_string(predicted.width()) + "x" +
        std::to_string(predicted.height()) + " but ground truth is " +
        std::to_string(truth.width()) + "x" + std::to_string(truth.height()));
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int g = truth[i];
    if (g == kIgnoreLabel) continue;
    const int p = predicted[i];
    if (g > kMaxCategory) throw std::invalid_argument("ground truth label out of range");
    if (p > kMaxCategory) {
      throw std::invalid_argument("prediction label " + std::to_string(p) +
                                  " at an evaluated pixel");
    }
    add(g, p);
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

ConfusionMatrix ConfusionMatrix::transposed() const {
  ConfusionMatrix t;
  for (int g = 0; g < kNumClasses; ++g) {
    for (int p = 0; p < kNumClasses; ++p) t.add(p, g, at(g, p));
  }
  return t;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t sum = 0;
  for (auto c : counts_) sum += c;
  return sum;
}

std::uint64_t ConfusionMatrix::row_sum(int truth) const {
  std::uint64_t sum = 0;
  for (int p = 0; p < kNumClasses; ++p) sum += at(truth, p);
  return sum;
}

std::uint64_t ConfusionMatrix::column_sum(int predicted) const {
  std::uint64_t sum = 0;
  for (int g = 0; g < kNumClasses; ++g) sum += at(g, predicted);
  return sum;
}

std::array<std::optional<double>, kNumClasses> iou_per_class(const ConfusionMatrix& acc) {
  std::array<std::optional<double>, kNumClasses> iou{};
  for (int c = 0; c < kNumClasses; ++c) {
    const std::uint64_t tp = acc.at(c, c);
    const std::uint64_t fp = acc.column_sum(c) - tp;
    const std::uint64_t fn = acc.row_sum(c) - tp;
    const std::uint64_t denom = tp + fp + fn;
    if (denom > 0) iou[c] = static_cast<double>(tp) / static_cast<double>(denom);
  }
  return iou;
}

double mean_iou(const ConfusionMatrix& acc) {
  if (acc.total() == 0) throw std::domain_error("mean IOU of an empty confusion matrix");
  double sum = 0.0;
  int present = 0;
  for (const auto& v : iou_per_class(acc)) {
    if (v) {
      sum += *v;
      ++present;
    }
  }
  return sum / present;
}

double pixel_accuracy(const ConfusionMatrix& acc) {
  const std::uint64_t total = acc.total();
  if (total == 0) return 0.0;
  std::uint64_t diagonal = 0;
  for (int c = 0; c < kNumClasses; ++c) diagonal += acc.at(c, c);
  return static_cast<double>(diagonal) / static_cast<double>(total);
}

double binary_iou(const BinaryMask& predicted, const BinaryMask& truth) {
  if (!predicted.same_shape(truth)) {
    throw std::invalid_argument("binary IOU of masks with different dimensions");
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] != 0;
    const bool g = truth[i] != 0;
    inter += (p && g) ? 1 : 0;
    uni += (p || g) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

EvalReport EvalReport::from_confusion(const ConfusionMatrix& confusion) {
  EvalReport report;
  report.confusion = confusion;
  report.per_class_iou = iou_per_class(confusion);
  report.mean_iou = maskforge::mean_iou(confusion);
  report.pixel_accuracy = maskforge::pixel_accuracy(confusion);
  return report;
}

nlohmann::json EvalReport::to_json() const {
  using nlohmann::json;
  json per_class = json::array();
  json present = json::array();
  for (const auto& v : per_class_iou) {
    per_class.push_back(v ? json(*v) : json(nullptr));
    present.push_back(v.has_value());
  }
  json matrix = json::array();
  for (int g = 0; g < kNumClasses; ++g) {
    json row = json::array();
    for (int p = 0; p < kNumClasses; ++p) row.push_back(confusion.at(g, p));
    matrix.push_back(std::move(row));
  }
  json out = {{"per_class_iou", per_class},
              {"class_present", present},
              {"mean_iou", mean_iou},
              {"pixel_accuracy", pixel_accuracy},
              {"evaluated_pixels", confusion.total()},
              {"images", images},
              {"confusion_matrix", matrix}};
  if (mean_binary_iou) {
    out["mean_binary_iou"] = *mean_binary_iou;
    out["binary_both_empty_images"] = both_empty_binary;
  }
  return out;
}

void Evaluator::add(const LabelMask& predicted, const LabelMask& truth) {
  confusion_.accumulate(predicted, truth);
  const BinaryMask p = binarize(predicted);
  const BinaryMask g = binarize(truth);
  if (p.count_foreground() == 0 && g.count_foreground() == 0) ++both_empty_;
  binary_iou_sum_ += binary_iou(p, g);
  ++images_;
}

void Evaluator::merge(const Evaluator& other) {
  confusion_.merge(other.confusion_);
  binary_iou_sum_ += other.binary_iou_sum_;
  images_ += other.images_;
  both_empty_ += other.both_empty_;
}

EvalReport Evaluator::report() const {
  EvalReport report = EvalReport::from_confusion(confusion_);
  report.images = images_;
  report.both_empty_binary = both_empty_;
  if (images_ > 0) report.mean_binary_iou = binary_iou_sum_ / static_cast<double>(images_);
  return report;
}

}  // namespace maskforge
