#pragma once

// Feature normalization, the kNN grasp classifier over single readings, mode
// aggregation over a grasp's prediction window, and a confusion-matrix-driven
// stochastic classifier.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "layerkit/dataset.hpp"
#include "layerkit/rng.hpp"

namespace layerkit {

using Matrix4 = std::array<std::array<double, kNumClasses>, kNumClasses>;

/// Per-feature standardization fitted on a training set.
struct Normalizer {
  Flux means{};
  Flux stds{};

  Flux apply(const Flux& x) const;
  Flux invert(const Flux& z) const;
};

/// Population statistics (divisor n) over every reading of every episode.
/// Features with std below 1e-12 get std 1. Throws kEmptyTrainingSet.
Normalizer fit_normalizer(const Dataset& train);

/// Anything mapping one reading to a grasp class.
class ReadingClassifier {
 public:
  virtual ~ReadingClassifier() = default;
  virtual GraspClass predict(const SensorReading& reading) const = 0;
};

/// Provenance stored in the model file.
struct ModelMeta {
  std::string source;
  std::uint64_t seed = 0;
};

/// Exact k-nearest-neighbour classifier, Euclidean distance on normalized
/// features, unweighted majority vote.
///
/// Neighbour selection orders points by (squared distance, insertion index),
/// so exact ties at the k-th distance keep the earlier point. A tied vote goes
/// to the class with the smaller summed neighbour distance, then to the
/// smaller class index.
class KnnModel final : public ReadingClassifier {
 public:
  using Meta = ModelMeta;

  /// `points` must already be normalized with `normalizer`.
  KnnModel(Normalizer normalizer, std::vector<Flux> points,
           std::vector<GraspClass> labels, int k, Meta meta = {});

  /// Fits a normalizer on `train` and stores every normalized reading with
  /// its episode label. Throws kInsufficientData when the reading count < k.
  static KnnModel fit(const Dataset& train, int k, Meta meta = {});

  GraspClass predict(const SensorReading& reading) const override;
  GraspClass predict_normalized(const Flux& z) const;

  int k() const noexcept { return k_; }
  std::size_t size() const noexcept { return labels_.size(); }
  const Normalizer& normalizer() const noexcept { return normalizer_; }
  const Meta& meta() const noexcept { return meta_; }
  Flux point(std::size_t i) const;
  GraspClass label(std::size_t i) const { return GraspClass(labels_[i]); }

 private:
  Normalizer normalizer_;
  std::vector<double> points_;  // row-major, kFluxDim per point
  std::vector<std::uint8_t> labels_;
  int k_;
  Meta meta_;
};

/// Model file: {"k", "normalizer": {"means", "stds"}, "points": [{"x", "y"}],
/// "meta": {"source", "seed"}}.
std::string serialize_model(const KnnModel& model);
KnnModel parse_model(const std::string& text);
void save_model(const KnnModel& model, const std::filesystem::path& path);
KnnModel load_model(const std::filesystem::path& path);

using PredictionWindow = std::vector<GraspClass>;

/// Most frequent class; ties go to the smaller class index.
/// Throws kEmptyWindow.
GraspClass aggregate_mode(std::span<const GraspClass> window);

/// Draws predictions from the row of a confusion matrix selected by the true
/// class. Owns its random stream; not for sharing across threads.
class StochasticClassifier {
 public:
  /// Rows must be non-negative and sum to 1 within 1e-9.
  StochasticClassifier(const Matrix4& confusion, std::uint64_t seed);

  GraspClass sample(GraspClass true_class);
  void reseed(std::uint64_t seed) { rng_ = Rng(seed); }
  const Matrix4& confusion() const noexcept { return confusion_; }

 private:
  Matrix4 confusion_;
  Rng rng_;
};

/// Throws kInvalidArgument unless every row is a probability vector.
void validate_row_stochastic(const Matrix4& m, double tolerance = 1e-9);

/// Rescales each row to sum to 1 (rows of printed tables often sum to 0.999).
Matrix4 renormalize_rows(const Matrix4& m);

/// Lowers the diagonal of each listed class by `amount` (floored at 0) and
/// spreads the removed mass evenly over that row's other three entries.
Matrix4 degrade_diagonal(const Matrix4& m, std::span<const int> classes,
                         double amount);

/// The averaged normalized confusion matrix reported for the tactile kNN
/// classifier (rows: true class, columns: prediction).
inline constexpr Matrix4 kReferenceConfusion = {{
    {1.000, 0.000, 0.000, 0.000},
    {0.000, 0.999, 0.000, 0.001},
    {0.030, 0.003, 0.866, 0.100},
    {0.128, 0.256, 0.138, 0.478},
}};

}  // namespace layerkit
