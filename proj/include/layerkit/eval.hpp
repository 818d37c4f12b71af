#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "layerkit/classify.hpp"
#include "layerkit/dataset.hpp"

namespace layerkit {

/// counts[true][predicted].
class ConfusionMatrix {
 public:
  using Counts = std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(const Counts& counts) : counts_(counts) {}

  void add(GraspClass truth, GraspClass predicted, std::uint64_t n = 1) {
    counts_[truth.index()][predicted.index()] += n;
  }

  std::uint64_t at(int truth, int predicted) const {
    return counts_[GraspClass(truth).index()][GraspClass(predicted).index()];
  }
  std::uint64_t row_sum(int truth) const;
  std::uint64_t total() const;
  const Counts& counts() const noexcept { return counts_; }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  Counts counts_{};
};

struct NormalizedConfusion {
  Matrix4 rates{};
  /// false for rows with no samples; those rows are all zero.
  std::array<bool, kNumClasses> supported{};
};

/// Predicts every reading of every validation episode and tallies it under the
/// episode's label. Throws kEmptyDataset.
ConfusionMatrix evaluate(const ReadingClassifier& classifier, const Dataset& val);

NormalizedConfusion row_normalize(const ConfusionMatrix& cm);

/// Mean recall over classes with nonzero support. Throws kNoSupport.
double balanced_accuracy(const ConfusionMatrix& cm);

struct CvSettings {
  int k = 10;
  std::size_t folds = 100;
  double train_fraction = 0.95;
  std::uint64_t seed = 0;
};

struct CvReport {
  std::size_t folds = 0;
  int k = 0;
  double train_fraction = 0.0;
  std::uint64_t seed = 0;
  /// Average of per-fold row-normalized matrices; a fold contributes to a row
  /// only when its validation set contains that class.
  Matrix4 mean_confusion{};
  std::array<double, kNumClasses> per_class_accuracy{};
  /// Number of folds whose validation set contained each class.
  std::array<std::size_t, kNumClasses> class_support{};
  double balanced_accuracy_mean = 0.0;
  /// Sample standard deviation (n - 1) across folds; 0 for a single fold.
  double balanced_accuracy_std = 0.0;
  std::vector<double> fold_balanced_accuracy;

  friend bool operator==(const CvReport&, const CvReport&) = default;
};

/// Episode-grouped cross-validation over make_cv_folds(ds, folds, fraction,
/// seed). Folds run in parallel (see parallel.hpp); the result is identical
/// to serial execution. Throws kInsufficientData when a fold's training side
/// has fewer than k readings.
CvReport cross_validate(const Dataset& ds, const CvSettings& settings);

std::string cv_report_to_json(const CvReport& report);
CvReport cv_report_from_json(const std::string& text);

/// Table-style rendering of the mean confusion and balanced accuracy.
std::string format_cv_report(const CvReport& report);

}  // namespace layerkit
