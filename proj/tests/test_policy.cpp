#include <doctest.h>

#include <json.hpp>

#include "layerkit/error.hpp"
#include "layerkit/policy.hpp"
#include "support.hpp"

using namespace layerkit;
using namespace layerkit::test;

namespace {

// Edges 0, -4, -8, -12 with the finger starting at -5: d = 0 pinches two
// layers and d = -2 pinches one.
TrialEnv worked_example_env() {
  StackConfig sc;
  sc.n_layers = 4;
  sc.layer_thickness_mm = 4.0;
  sc.stack_variation_mm = 0.0;
  sc.start_height_mm = -5.0;
  return TrialEnv{ClothStackModel(sc), TactileSignalModel::from_params({}), 0.0};
}

PolicyConfig feedback_config(int target, double init, HeightBounds bounds) {
  PolicyConfig cfg;
  cfg.kind = PolicyKind::kFeedback;
  cfg.target_layers = target;
  cfg.d_vert_init_mm = init;
  cfg.bounds = bounds;
  cfg.window = 10;
  return cfg;
}

// Always claims the given class.
class ConstantWindow final : public WindowClassifier {
 public:
  explicit ConstantWindow(int c) : c_(c) {}
  PredictionWindow classify(const GraspOutcome& o) override {
    return PredictionWindow(o.readings.size(), GraspClass(c_));
  }

 private:
  int c_;
};

// Truth for the first 40 % of the window, class 3 after that.
class MostlyWrongWindow final : public WindowClassifier {
 public:
  PredictionWindow classify(const GraspOutcome& o) override {
    PredictionWindow w;
    for (std::size_t i = 0; i < o.readings.size(); ++i) {
      w.push_back(i * 10 < o.readings.size() * 4 ? o.signal_class() : GraspClass(3));
    }
    return w;
  }
};

AttemptRecord attempt(int i, int truth, int pred) {
  AttemptRecord a;
  a.attempt_index = i;
  a.true_layers = truth;
  a.predicted = GraspClass(pred);
  return a;
}

}  // namespace

TEST_CASE("next_height") {
  PolicyConfig cfg = feedback_config(1, 0.0, {0.0, 20.0});
  CHECK(next_height(cfg, 10.0, GraspClass(2)) == 8.0);
  cfg.target_layers = 2;
  CHECK(next_height(cfg, 10.0, GraspClass(0)) == 12.0);
  CHECK(next_height(cfg, 20.0, GraspClass(1)) == 20.0);
  CHECK(next_height(cfg, 19.0, GraspClass(1)) == 20.0);
  CHECK(next_height(cfg, 0.5, GraspClass(3)) == 0.0);
}

TEST_CASE("tuned heights") {
  const auto fixed1 = PolicyConfig::from_tuned_heights(PolicyKind::kFixed, 1, 2.0, 6.0);
  CHECK(fixed1.bounds.low == 0.0);
  CHECK(fixed1.bounds.high == 8.0);
  CHECK(fixed1.d_vert_init_mm == 2.0);
  CHECK(PolicyConfig::from_tuned_heights(PolicyKind::kFixed, 2, 2.0, 6.0).d_vert_init_mm == 6.0);
  CHECK(PolicyConfig::from_tuned_heights(PolicyKind::kFeedback, 2, 2.0, 6.0).d_vert_init_mm ==
        4.0);
}

TEST_CASE("config validation") {
  PolicyConfig cfg = feedback_config(3, 0.0, {0.0, 1.0});
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_NOTHROW(cfg.validate(true));
  cfg.target_layers = 0;
  CHECK_THROWS_AS(cfg.validate(true), Error);
  cfg = feedback_config(1, 0.0, {1.0, 1.0});
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = feedback_config(1, 0.0, {0.0, 1.0});
  cfg.max_attempts = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK(policy_kind_from_string("random") == PolicyKind::kRandom);
  CHECK_THROWS_AS(policy_kind_from_string("greedy"), Error);
}

TEST_CASE("worked feedback example converges in two attempts") {
  const TrialEnv env = worked_example_env();
  OracleWindowClassifier oracle;
  const TrialResult r = run_trial(feedback_config(1, 0.0, {-4.0, 4.0}), env, oracle, 1);
  CHECK(r.success);
  CHECK(r.failure == FailureType::kNone);
  REQUIRE(r.attempts_used == 2);
  CHECK(r.attempts[0].d_vert_mm == 0.0);
  CHECK(r.attempts[0].true_layers == 2);
  CHECK(r.attempts[0].predicted.value() == 2);
  CHECK(r.attempts[0].released);
  CHECK(r.attempts[1].d_vert_mm == -2.0);
  CHECK(r.attempts[1].true_layers == 1);
  CHECK(r.attempts[1].predicted.value() == 1);
  CHECK(r.retained_layers == 1);
}

TEST_CASE("feedback with a perfect classifier converges monotonically") {
  Rng rng(41);
  for (int t = 0; t < 200; ++t) {
    const ConvergenceCase c = random_convergence_case(rng);
    OracleWindowClassifier oracle;
    const TrialResult r = run_trial(c.cfg, c.env, oracle, rng.next_u64());
    CHECK(r.success);
    CHECK(r.attempts_used <= c.attempt_limit);
    // Every move is one step in a single direction.
    for (std::size_t i = 2; i < r.attempts.size(); ++i) {
      const double prev = r.attempts[i - 1].d_vert_mm - r.attempts[i - 2].d_vert_mm;
      const double now = r.attempts[i].d_vert_mm - r.attempts[i - 1].d_vert_mm;
      CHECK(prev * now >= 0.0);
    }
  }
}

TEST_CASE("early termination on a wrong claim is a prediction failure") {
  const TrialEnv env = worked_example_env();
  ConstantWindow claims_one(1);
  // d = 0 pinches two layers but the classifier claims one.
  const TrialResult r = run_trial(feedback_config(1, 0.0, {-4.0, 4.0}), env, claims_one, 2);
  CHECK_FALSE(r.success);
  CHECK(r.attempts_used == 1);
  CHECK(r.failure == FailureType::kPrediction);
}

TEST_CASE("fixed policy") {
  const TrialEnv env = worked_example_env();
  PolicyConfig cfg = feedback_config(1, -2.0, {-4.0, 4.0});
  cfg.kind = PolicyKind::kFixed;
  OracleWindowClassifier oracle;
  const TrialResult ok = run_trial(cfg, env, oracle, 3);
  CHECK(ok.success);
  CHECK(ok.attempts_used == 1);

  cfg.d_vert_init_mm = 0.0;  // two layers
  ConstantWindow claims_zero(0);
  const TrialResult bad = run_trial(cfg, env, claims_zero, 3);
  CHECK_FALSE(bad.success);
  CHECK(bad.attempts_used == 1);
  CHECK(bad.failure == FailureType::kGrasp);
  CHECK(bad.retained_layers == 2);
}

TEST_CASE("attribute_failure") {
  SUBCASE("early termination with the wrong layers") {
    CHECK(attribute_failure({attempt(0, 2, 1)}, true, 2, 1) == FailureType::kPrediction);
  }
  SUBCASE("budget spent after misjudging a correct grasp") {
    std::vector<AttemptRecord> a;
    for (int i = 0; i < 10; ++i) a.push_back(attempt(i, i == 4 ? 1 : 2, 2));
    CHECK(attribute_failure(a, false, std::nullopt, 1) == FailureType::kPrediction);
  }
  SUBCASE("slip after lifting the right layers") {
    CHECK(attribute_failure({attempt(0, 1, 1)}, true, 0, 1) == FailureType::kGrasp);
  }
  SUBCASE("budget spent without ever reaching the target") {
    std::vector<AttemptRecord> a;
    for (int i = 0; i < 10; ++i) a.push_back(attempt(i, 0, 0));
    CHECK(attribute_failure(a, false, std::nullopt, 1) == FailureType::kGrasp);
  }
  SUBCASE("a success is not a failure") {
    CHECK_THROWS_AS(attribute_failure({attempt(0, 1, 1)}, true, 1, 1), Error);
  }
}

TEST_CASE("unreachable target with a perfect classifier is a grasp failure") {
  const TrialEnv env = worked_example_env();
  OracleWindowClassifier oracle;
  // Heights 3..4 always pinch two or more layers.
  const TrialResult r = run_trial(feedback_config(1, 4.0, {3.0, 4.0}), env, oracle, 4);
  CHECK_FALSE(r.success);
  CHECK(r.attempts_used == 10);
  CHECK(r.failure == FailureType::kGrasp);
}

TEST_CASE("attempt records carry the window mode") {
  const TrialEnv env = worked_example_env();
  MostlyWrongWindow cls;
  PolicyConfig cfg = feedback_config(1, 0.0, {-4.0, 4.0});
  cfg.max_attempts = 4;
  const TrialResult r = run_trial(cfg, env, cls, 5);
  CHECK(r.attempts_used <= 4);
  for (const AttemptRecord& a : r.attempts) CHECK(a.predicted.value() == 3);
  CHECK(r.failure == FailureType::kPrediction);  // d = -2 had one layer, judged three
}

TEST_CASE("random heights are uniform within the bounds") {
  const TrialEnv env = worked_example_env();
  PolicyConfig cfg = feedback_config(1, 0.0, {-4.0, 6.0});
  cfg.kind = PolicyKind::kRandom;
  cfg.window = 1;
  ConstantWindow never(0);  // never claims the target, so all ten attempts run
  std::array<int, 10> bins{};
  int n = 0;
  for (std::uint64_t s = 0; s < 2000; ++s) {
    const TrialResult r = run_trial(cfg, env, never, s);
    CHECK(r.attempts_used == 10);
    for (const AttemptRecord& a : r.attempts) {
      REQUIRE(a.d_vert_mm >= -4.0);
      REQUIRE(a.d_vert_mm < 6.0);
      bins[static_cast<std::size_t>(a.d_vert_mm + 4.0)] += 1;
      ++n;
    }
  }
  // Chi-square with 9 degrees of freedom; 27.9 is the 0.999 quantile.
  double chi2 = 0.0;
  const double expect = n / 10.0;
  for (int b : bins) chi2 += (b - expect) * (b - expect) / expect;
  CHECK(chi2 < 27.9);
}

TEST_CASE("trials are reproducible and classifier-independent in their physics") {
  const ClothStackModel stack{StackConfig{}};
  const TrialEnv env{stack, TactileSignalModel::from_params({}), 0.1};
  const auto cfg = PolicyConfig::from_tuned_heights(PolicyKind::kRandom, 1, 2.0, 6.0);
  StochasticWindowClassifier a(renormalize_rows(kReferenceConfusion),
                               StochasticWindowClassifier::Sampling::kShared);
  StochasticWindowClassifier b(renormalize_rows(kReferenceConfusion),
                               StochasticWindowClassifier::Sampling::kShared);
  OracleWindowClassifier oracle;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const TrialResult ra = run_trial(cfg, env, a, s);
    const TrialResult rb = run_trial(cfg, env, b, s);
    CHECK(trial_to_json(ra, "x", 1, s) == trial_to_json(rb, "x", 1, s));
    const TrialResult ro = run_trial(cfg, env, oracle, s);
    const std::size_t common = std::min(ra.attempts.size(), ro.attempts.size());
    for (std::size_t i = 0; i < common; ++i) {
      CHECK(ra.attempts[i].d_vert_mm == ro.attempts[i].d_vert_mm);
      CHECK(ra.attempts[i].true_layers == ro.attempts[i].true_layers);
    }
  }
}

TEST_CASE("window classifiers") {
  GraspOutcome g;
  g.true_layers = 2;
  Rng rng(6);
  for (int i = 0; i < 160; ++i) g.readings.emplace_back(random_flux(rng));

  const Matrix4 ref = renormalize_rows(kReferenceConfusion);
  StochasticWindowClassifier shared(ref, StochasticWindowClassifier::Sampling::kShared, 1);
  for (int t = 0; t < 20; ++t) {
    const auto w = shared.classify(g);
    CHECK(w.size() == 160);
    CHECK(std::all_of(w.begin(), w.end(), [&](GraspClass c) { return c == w[0]; }));
  }
  StochasticWindowClassifier indep(ref, StochasticWindowClassifier::Sampling::kIndependent, 1);
  const auto votes = count_votes(indep.classify(g));
  CHECK(votes[2] > 100);
  CHECK(votes[3] > 0);

  OracleWindowClassifier oracle;
  const auto w = oracle.classify(g);
  CHECK(count_votes(w)[2] == 160);

  const KnnModel m = KnnModel::fit(separable_dataset(2, 10, 3), 3);
  ReadingWindowClassifier knn(std::make_shared<const KnnModel>(m));
  CHECK(knn.classify(g).size() == 160);
}

TEST_CASE("trial json schema") {
  const TrialEnv env = worked_example_env();
  OracleWindowClassifier oracle;
  const TrialResult r = run_trial(feedback_config(1, 0.0, {-4.0, 4.0}), env, oracle, 9);
  const auto j = nlohmann::json::parse(trial_to_json(r, "feedback-tactile", 1, 9));
  CHECK(j["policy"] == "feedback-tactile");
  CHECK(j["target"] == 1);
  CHECK(j["success"] == true);
  CHECK(j["failure"] == "none");
  CHECK(j["seed"] == 9);
  REQUIRE(j["attempts"].size() == 2);
  CHECK(j["attempts"][1]["i"] == 1);
  CHECK(j["attempts"][1]["d_vert_mm"] == -2.0);
  CHECK(j["attempts"][1]["true"] == 1);
  CHECK(j["attempts"][1]["pred"] == 1);
}
