#include "layerkit/policy.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "layerkit/error.hpp"

namespace layerkit {

const char* to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kFixed: return "fixed";
    case PolicyKind::kRandom: return "random";
    case PolicyKind::kFeedback: return "feedback";
  }
  return "unknown";
}

PolicyKind policy_kind_from_string(const std::string& name) {
  if (name == "fixed") return PolicyKind::kFixed;
  if (name == "random") return PolicyKind::kRandom;
  if (name == "feedback") return PolicyKind::kFeedback;
  throw Error(ErrorKind::kInvalidArgument,
              fmt::format("unknown policy '{}' (valid: fixed, random, feedback)", name));
}

const char* to_string(FailureType failure) {
  switch (failure) {
    case FailureType::kNone: return "none";
    case FailureType::kPrediction: return "prediction";
    case FailureType::kGrasp: return "grasp";
  }
  return "unknown";
}

void PolicyConfig::validate(bool allow_experimental) const {
  const int max_target = allow_experimental ? 3 : 2;
  if (target_layers < 1 || target_layers > max_target) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("target must be in 1..{}, got {}", max_target, target_layers));
  }
  if (!(step_mm > 0.0)) throw Error(ErrorKind::kInvalidArgument, "step_mm must be positive");
  if (!(bounds.low < bounds.high)) {
    throw Error(ErrorKind::kInvalidArgument, "height bounds need low < high");
  }
  if (max_attempts < 1) throw Error(ErrorKind::kInvalidArgument, "max_attempts must be >= 1");
  if (window < 1) throw Error(ErrorKind::kInvalidArgument, "window must be >= 1");
  if (!std::isfinite(d_vert_init_mm)) {
    throw Error(ErrorKind::kInvalidArgument, "d_vert_init_mm must be finite");
  }
}

PolicyConfig PolicyConfig::from_tuned_heights(PolicyKind kind, int target, double d1_mm,
                                              double d2_mm) {
  PolicyConfig cfg;
  cfg.kind = kind;
  cfg.target_layers = target;
  cfg.bounds = {std::min(d1_mm, d2_mm) - 2.0, std::max(d1_mm, d2_mm) + 2.0};
  switch (kind) {
    case PolicyKind::kFixed: cfg.d_vert_init_mm = target == 1 ? d1_mm : d2_mm; break;
    case PolicyKind::kRandom: cfg.d_vert_init_mm = cfg.bounds.low; break;
    case PolicyKind::kFeedback: cfg.d_vert_init_mm = d1_mm + 2.0; break;
  }
  return cfg;
}

double next_height(const PolicyConfig& cfg, double d_vert_mm, GraspClass predicted) {
  double next = d_vert_mm;
  if (predicted.value() > cfg.target_layers) {
    next -= cfg.step_mm;  // too many layers: grasp higher
  } else if (predicted.value() < cfg.target_layers) {
    next += cfg.step_mm;
  }
  return std::clamp(next, cfg.bounds.low, cfg.bounds.high);
}

FailureType attribute_failure(const std::vector<AttemptRecord>& attempts, bool terminated_early,
                              std::optional<int> retained, int target) {
  if (attempts.empty()) return FailureType::kGrasp;
  if (terminated_early) {
    if (attempts.back().true_layers != target) return FailureType::kPrediction;
    if (retained && *retained == target) {
      throw Error(ErrorKind::kInvalidArgument, "attribute_failure called on a successful trial");
    }
    return FailureType::kGrasp;  // the right layers slipped during the lift
  }
  const bool misjudged_good_grasp =
      std::any_of(attempts.begin(), attempts.end(), [target](const AttemptRecord& a) {
        return a.true_layers == target && a.predicted.value() != target;
      });
  return misjudged_good_grasp ? FailureType::kPrediction : FailureType::kGrasp;
}

PredictionWindow ReadingWindowClassifier::classify(const GraspOutcome& outcome) {
  PredictionWindow w;
  w.reserve(outcome.readings.size());
  for (const SensorReading& r : outcome.readings) w.push_back(inner_->predict(r));
  return w;
}

PredictionWindow OracleWindowClassifier::classify(const GraspOutcome& outcome) {
  return PredictionWindow(outcome.readings.size(), outcome.signal_class());
}

PredictionWindow StochasticWindowClassifier::classify(const GraspOutcome& outcome) {
  const GraspClass truth = outcome.signal_class();
  if (sampling_ == Sampling::kShared) {
    return PredictionWindow(outcome.readings.size(), inner_.sample(truth));
  }
  PredictionWindow w;
  w.reserve(outcome.readings.size());
  for (std::size_t i = 0; i < outcome.readings.size(); ++i) w.push_back(inner_.sample(truth));
  return w;
}

TrialResult run_trial(const PolicyConfig& cfg, const TrialEnv& env, WindowClassifier& classifier,
                      std::uint64_t seed) {
  cfg.validate(/*allow_experimental=*/true);
  Rng stack_rng(derive_seed(seed, 0));
  Rng grasp_rng(derive_seed(seed, 1));
  Rng height_rng(derive_seed(seed, 2));
  Rng slip_rng(derive_seed(seed, 3));
  classifier.reseed(derive_seed(seed, 4));

  const StackInstance stack = reset_stack(env.stack, stack_rng);
  const int target = cfg.target_layers;
  const int attempt_budget = cfg.kind == PolicyKind::kFixed ? 1 : cfg.max_attempts;

  TrialResult result;
  double d_vert = cfg.d_vert_init_mm;
  for (int a = 0; a < attempt_budget; ++a) {
    if (cfg.kind == PolicyKind::kRandom) {
      d_vert = height_rng.uniform(cfg.bounds.low, cfg.bounds.high);
    }
    const GraspOutcome outcome = simulate_grasp(stack, d_vert, env.signal, cfg.window, grasp_rng);
    const PredictionWindow window = classifier.classify(outcome);
    const GraspClass predicted = aggregate_mode(window);

    AttemptRecord rec;
    rec.attempt_index = a;
    rec.d_vert_mm = d_vert;
    rec.true_layers = outcome.true_layers;
    rec.predicted = predicted;
    result.attempts.push_back(rec);
    result.attempts_used = a + 1;

    // Fixed has no feedback and always lifts after its single grasp.
    if (cfg.kind == PolicyKind::kFixed || predicted.value() == target) {
      const int retained = lift_check(outcome, env.p_slip, slip_rng);
      result.retained_layers = retained;
      result.success = retained == target;
      if (!result.success) {
        result.failure = cfg.kind == PolicyKind::kFixed
                             ? FailureType::kGrasp
                             : attribute_failure(result.attempts, true, retained, target);
      }
      return result;
    }

    result.attempts.back().released = true;
    if (cfg.kind == PolicyKind::kFeedback) d_vert = next_height(cfg, d_vert, predicted);
  }
  result.failure = attribute_failure(result.attempts, false, std::nullopt, target);
  return result;
}

std::string trial_to_json(const TrialResult& result, const std::string& policy_name, int target,
                          std::uint64_t seed) {
  nlohmann::ordered_json obj;
  obj["policy"] = policy_name;
  obj["target"] = target;
  obj["success"] = result.success;
  obj["failure"] = to_string(result.failure);
  auto attempts = nlohmann::ordered_json::array();
  for (const AttemptRecord& a : result.attempts) {
    attempts.push_back({{"i", a.attempt_index},
                        {"d_vert_mm", a.d_vert_mm},
                        {"true", a.true_layers},
                        {"pred", a.predicted.value()}});
  }
  obj["attempts"] = std::move(attempts);
  obj["seed"] = seed;
  return obj.dump();
}

}  // namespace layerkit
