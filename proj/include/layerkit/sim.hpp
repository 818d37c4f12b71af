#pragma once

// Simulated cloth stack: one-dimensional layer geometry with per-trial
// variation, finger height to layers grasped, slip during the lift, and a
// Gaussian tactile signal generator whose difficulty can be calibrated.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "layerkit/classify.hpp"
#include "layerkit/dataset.hpp"
#include "layerkit/eval.hpp"
#include "layerkit/rng.hpp"

namespace layerkit {

// Heights are in millimetres, positive up. The finger ends at
// start_height_mm - d_vert, so a larger d_vert grasps more layers.
struct StackConfig {
  int n_layers = 4;
  double layer_thickness_mm = 4.0;   // physical cloths: 3 to 5 mm
  double stack_variation_mm = 1.5;
  /// Air-pocket effect: raises every edge below the second layer, shrinking
  /// the gap between layers 2 and 3. Must stay below the layer thickness.
  double gap_compression_mm = 0.0;
  double top_edge_mm = 0.0;
  double start_height_mm = 0.0;
};

class ClothStackModel {
 public:
  explicit ClothStackModel(const StackConfig& config);
  const StackConfig& config() const noexcept { return config_; }

  /// Nominal (zero-offset) edge heights, top layer first.
  std::vector<double> nominal_edges() const;

  /// d_vert at the middle of the height band grasping `layers` layers on a
  /// nominal stack (0 means just above the top edge).
  double band_center_d_vert(int layers) const;

 private:
  StackConfig config_;
};

/// Concrete layer edges for one trial, strictly decreasing.
struct StackInstance {
  std::vector<double> edges;
  double offset_mm = 0.0;
  double start_height_mm = 0.0;

  /// Count of edges at or above finger height h.
  int layers_at_height(double h) const;
  int layers_at_d_vert(double d_vert) const { return layers_at_height(start_height_mm - d_vert); }
};

/// Draws the per-trial offset u ~ Uniform(-v, v) and applies it to every edge.
StackInstance reset_stack(const ClothStackModel& model, Rng& rng);

struct SignalParams {
  /// Scales every class-mean difference.
  double separation = 4.0;
  /// Offset of the class-3 mean from the class-2 mean along its own axis, in
  /// units of `separation`. Smaller values make 2 and 3 harder to separate.
  double proximity = 0.6;
  double sample_rate_hz = 350.0;
  /// Fixes mean directions, sensor baselines and per-axis gains.
  std::uint64_t seed = 0;
  /// Per-grasp mean offset, in units of the class std. 0 disables it.
  double episode_drift = 0.0;
};

/// Shifted tactile statistics for cloths the classifier was not trained on.
struct DomainShift {
  /// Mean displacement along a fixed random direction, in class-std units.
  double mean_shift = 0.0;
  double std_scale = 1.0;
  std::uint64_t seed = 0;
};

/// Per-class diagonal Gaussians in raw sensor units.
///
/// In a latent unit-free space the class means are
///   m0 = 0, m1 = s*u0, m2 = s*(u0 + u1), m3 = m2 + s*(q*u2 - 0.25*u1)
/// for orthonormal u0..u2, separation s and proximity q, with latent stds
/// 0.8, 0.8, 1.2, 1.8. Raw values are baseline + gain * latent per axis.
class TactileSignalModel {
 public:
  static TactileSignalModel from_params(const SignalParams& params);

  TactileSignalModel with_shift(const DomainShift& shift) const;

  const std::array<Flux, kNumClasses>& class_means() const noexcept { return means_; }
  const std::array<Flux, kNumClasses>& class_stds() const noexcept { return stds_; }
  const SignalParams& params() const noexcept { return params_; }
  double sample_rate_hz() const noexcept { return params_.sample_rate_hz; }

  /// `n` readings of one grasp of class `c`, drift applied once per grasp.
  std::vector<SensorReading> sample_grasp(GraspClass c, std::size_t n, Rng& rng) const;

 private:
  SignalParams params_;
  std::array<Flux, kNumClasses> means_{};
  std::array<Flux, kNumClasses> stds_{};
};

inline constexpr std::array<double, kNumClasses> kLatentClassStd = {0.8, 0.8, 1.2, 1.8};
inline constexpr double kClass3PullTowardClass1 = 0.25;

struct GraspOutcome {
  int true_layers = 0;
  std::vector<SensorReading> readings;
  double finger_height_mm = 0.0;

  GraspClass signal_class() const { return capped_class(true_layers); }
};

/// Lowers the finger to start_height - d_vert and emits `window` readings of
/// class min(true_layers, 3).
GraspOutcome simulate_grasp(const StackInstance& stack, double d_vert_mm,
                            const TactileSignalModel& signal, std::size_t window, Rng& rng);

/// Each grasped layer independently slips with probability p_slip.
int lift_check(const GraspOutcome& outcome, double p_slip, Rng& rng);

struct CollectionPlan {
  std::size_t n_episodes = 54;
  /// Approach offset drawn uniformly from [-range, +range] per episode.
  double range_mm = 2.0;
  /// Nominal heights cycled over episodes; empty means the band centres for
  /// 0..3 layers.
  std::vector<double> nominal_d_vert_mm;
  double grasp_duration_s = 1.0;
};

/// Episode i uses the stream derive_seed(seed, i): reset the stack, sample
/// the offset, grasp for grasp_duration_s and label min(true_layers, 3).
Dataset generate_dataset(const ClothStackModel& stack, const TactileSignalModel& signal,
                         const CollectionPlan& plan, std::uint64_t seed);

struct SimConfig {
  StackConfig stack;
  double p_slip = 0.0;
  SignalParams signal;
};

/// {"n_layers", "layer_thickness_mm", "stack_variation_mm",
///  "gap_compression_mm", "p_slip", "signal": {"separation", "sample_rate_hz",
///  "seed", ...}}; omitted keys keep their defaults, unknown keys are errors.
SimConfig sim_config_from_json(const std::string& text);
std::string sim_config_to_json(const SimConfig& config);
SimConfig load_sim_config(const std::filesystem::path& path);

struct CalibrationSettings {
  StackConfig stack;
  CollectionPlan plan;
  std::uint64_t data_seed = 0;
  CvSettings cv{10, 10, 0.95, 0};
  double separation_lo = 1.0;
  double separation_hi = 8.0;
  double proximity_lo = 0.0;
  double proximity_hi = 1.5;
  /// Golden-section steps per knob per round.
  int steps_per_search = 6;
  int max_rounds = 2;
  /// Stop early once the error is at most this.
  double good_enough = 0.03;
  /// Fail when the final error exceeds this.
  double tolerance = 0.08;
};

struct CalibrationResult {
  SignalParams params;
  std::array<double, kNumClasses> diagonal{};
  double max_abs_error = 0.0;
  int evaluations = 0;
};

/// Maximum absolute gap between two diagonals.
double max_diagonal_error(const std::array<double, kNumClasses>& achieved, const Matrix4& target);

/// Alternating golden-section search over separation then proximity, each
/// minimising the max absolute diagonal error between the cross-validated
/// mean confusion and `target`. Every evaluation regenerates the dataset from
/// data_seed, so the objective is a deterministic function of the knobs.
/// Throws kCalibrationFailed when the best error exceeds the tolerance.
CalibrationResult calibrate_signal_model(const Matrix4& target, const SignalParams& base,
                                         const CalibrationSettings& settings);

}  // namespace layerkit
