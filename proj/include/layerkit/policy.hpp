#pragma once

// Grasp policies run as a per-trial state machine against the simulator:
// choose a height, grasp, classify the window, then lift or re-grasp.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "layerkit/classify.hpp"
#include "layerkit/sim.hpp"

namespace layerkit {

enum class PolicyKind { kFixed, kRandom, kFeedback };

const char* to_string(PolicyKind kind);
/// Accepts "fixed", "random", "feedback". Throws kInvalidArgument.
PolicyKind policy_kind_from_string(const std::string& name);

struct HeightBounds {
  double low = 0.0;
  double high = 0.0;
};

struct PolicyConfig {
  PolicyKind kind = PolicyKind::kFeedback;
  int target_layers = 1;
  double d_vert_init_mm = 0.0;
  double step_mm = 2.0;
  HeightBounds bounds{};
  int max_attempts = 10;
  std::size_t window = 160;
  double lift_mm = 40.0;
  // Kept for completeness of the approach parameterization; the
  // one-dimensional stack gives them no effect.
  double d_slide_mm = 0.0;
  double d_lift_mm = 0.0;

  /// Throws kInvalidArgument. A target of 3 is accepted only with
  /// `allow_experimental`.
  void validate(bool allow_experimental = false) const;

  /// Config from the two hand-tuned heights d1 (one layer) and d2 (two
  /// layers): bounds [min - 2, max + 2] mm; Fixed starts at the target's tuned
  /// height, Random ignores the start, Feedback starts at d1 + 2 mm.
  static PolicyConfig from_tuned_heights(PolicyKind kind, int target, double d1_mm,
                                         double d2_mm);
};

/// One step toward the target, clamped to the bounds. `predicted` must differ
/// from the target.
double next_height(const PolicyConfig& cfg, double d_vert_mm, GraspClass predicted);

struct AttemptRecord {
  int attempt_index = 0;
  double d_vert_mm = 0.0;
  int true_layers = 0;
  GraspClass predicted{0};
  bool released = false;
};

enum class FailureType { kNone, kPrediction, kGrasp };

const char* to_string(FailureType failure);

struct TrialResult {
  bool success = false;
  FailureType failure = FailureType::kNone;
  std::vector<AttemptRecord> attempts;
  int attempts_used = 0;
  std::optional<int> retained_layers;
};

/// Failure cause of a failed trial:
///  - lifted on a claimed match while true layers != target: Prediction
///  - lifted with true layers == target but a layer slipped: Grasp
///  - ran out of attempts after misjudging a correct grasp: Prediction
///  - ran out of attempts without ever reaching the target: Grasp
FailureType attribute_failure(const std::vector<AttemptRecord>& attempts, bool terminated_early,
                              std::optional<int> retained, int target);

/// Classifies every reading of one grasp.
class WindowClassifier {
 public:
  virtual ~WindowClassifier() = default;
  virtual PredictionWindow classify(const GraspOutcome& outcome) = 0;
  /// Called once per trial so stochastic classifiers follow the trial seed.
  virtual void reseed(std::uint64_t /*seed*/) {}
};

/// Per-reading predictions from any ReadingClassifier (the kNN model).
class ReadingWindowClassifier final : public WindowClassifier {
 public:
  explicit ReadingWindowClassifier(std::shared_ptr<const ReadingClassifier> inner)
      : inner_(std::move(inner)) {}
  PredictionWindow classify(const GraspOutcome& outcome) override;

 private:
  std::shared_ptr<const ReadingClassifier> inner_;
};

/// Predicts the true (capped) layer count.
class OracleWindowClassifier final : public WindowClassifier {
 public:
  PredictionWindow classify(const GraspOutcome& outcome) override;
};

/// Confusion-matrix stand-in. kIndependent draws one prediction per reading;
/// kShared draws once per grasp and repeats it, like a classifier that judges
/// a grasp from a single image.
class StochasticWindowClassifier final : public WindowClassifier {
 public:
  enum class Sampling { kIndependent, kShared };

  StochasticWindowClassifier(const Matrix4& confusion, Sampling sampling,
                             std::uint64_t seed = 0)
      : inner_(confusion, seed), sampling_(sampling) {}

  PredictionWindow classify(const GraspOutcome& outcome) override;
  void reseed(std::uint64_t seed) override { inner_.reseed(seed); }

 private:
  StochasticClassifier inner_;
  Sampling sampling_;
};

struct TrialEnv {
  ClothStackModel stack;
  TactileSignalModel signal;
  double p_slip = 0.0;
};

/// Runs one trial. Independent streams derived from `seed` drive the stack
/// (0), grasp signals (1), random heights (2), slip (3) and the classifier
/// (4), so changing the classifier leaves the physical draws untouched.
TrialResult run_trial(const PolicyConfig& cfg, const TrialEnv& env, WindowClassifier& classifier,
                      std::uint64_t seed);

/// {"policy", "target", "success", "failure", "attempts": [{"i", "d_vert_mm",
/// "true", "pred"}], "seed"}
std::string trial_to_json(const TrialResult& result, const std::string& policy_name, int target,
                          std::uint64_t seed);

}  // namespace layerkit
