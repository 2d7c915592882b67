#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include <json.hpp>

#include "maskforge/image.hpp"

namespace maskforge {

/// counts(g, p): pixels with ground truth g predicted as p. Ignore pixels in
/// the ground truth are never counted.
class ConfusionMatrix {
 public:
  std::uint64_t at(int truth, int predicted) const {
    return counts_[truth * kNumClasses + predicted];
  }
  void add(int truth, int predicted, std::uint64_t n = 1) {
    counts_[truth * kNumClasses + predicted] += n;
  }

  /// Throws std::invalid_argument on a dimension mismatch, or if the
  /// prediction holds a label outside 0..20 at an evaluated pixel.
  void accumulate(const LabelMask& predicted, const LabelMask& truth);
  void merge(const ConfusionMatrix& other);
  ConfusionMatrix transposed() const;

  std::uint64_t total() const;
  std::uint64_t row_sum(int truth) const;
  std::uint64_t column_sum(int predicted) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::array<std::uint64_t, kNumClasses * kNumClasses> counts_{};
};

inline ConfusionMatrix accumulate_confusion(const LabelMask& predicted,
                                            const LabelMask& truth,
                                            ConfusionMatrix acc) {
  acc.accumulate(predicted, truth);
  return acc;
}

/// TP / (TP + FP + FN) per class; nullopt when the class never occurs in
/// either ground truth or prediction.
std::array<std::optional<double>, kNumClasses> iou_per_class(const ConfusionMatrix& acc);

/// Mean over present classes. Throws std::domain_error if nothing was evaluated.
double mean_iou(const ConfusionMatrix& acc);

double pixel_accuracy(const ConfusionMatrix& acc);

/// |pred & gt| / |pred | gt|, 1.0 when both are empty.
double binary_iou(const BinaryMask& predicted, const BinaryMask& truth);

struct EvalReport {
  std::array<std::optional<double>, kNumClasses> per_class_iou{};
  double mean_iou = 0.0;
  double pixel_accuracy = 0.0;
  ConfusionMatrix confusion;
  /// Mean of per-image foreground IOU, when binary scores were collected.
  std::optional<double> mean_binary_iou;
  std::size_t images = 0;
  std::size_t both_empty_binary = 0;

  static EvalReport from_confusion(const ConfusionMatrix& confusion);
  nlohmann::json to_json() const;
};

/// Dataset-level report: confusion counts summed over all pairs, plus the mean
/// per-image binary IOU of the foreground (labels 1..20).
class Evaluator {
 public:
  void add(const LabelMask& predicted, const LabelMask& truth);
  void merge(const Evaluator& other);
  EvalReport report() const;

 private:
  ConfusionMatrix confusion_;
  double binary_iou_sum_ = 0.0;
  std::size_t images_ = 0;
  std::size_t both_empty_ = 0;
};

}  // namespace maskforge
