#pragma once

// Batch trials per (condition, target, method) cell, aggregated into a
// results table with text and CSV renderings.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "layerkit/classify.hpp"
#include "layerkit/policy.hpp"
#include "layerkit/sim.hpp"

namespace layerkit {

struct ClassifierSpec {
  enum class Type { kKnn, kStochastic, kOracle };
  Type type = Type::kOracle;
  std::shared_ptr<const KnnModel> model;  // kKnn
  std::string model_path;                 // kKnn, informational
  Matrix4 confusion{};                    // kStochastic
  StochasticWindowClassifier::Sampling sampling =
      StochasticWindowClassifier::Sampling::kShared;
};

struct MethodSpec {
  std::string name;
  PolicyKind kind = PolicyKind::kFeedback;
  std::string classifier;  // key into ExperimentConfig::classifiers
};

struct Condition {
  std::string name;
  DomainShift shift;
};

struct ExperimentConfig {
  std::vector<MethodSpec> methods;
  std::map<std::string, ClassifierSpec> classifiers;
  SimConfig env;
  std::vector<Condition> conditions{{"train", {}}};
  std::vector<int> targets{1};
  /// Hand-tuned one- and two-layer heights in simulator coordinates.
  double d1_mm = 2.0;
  double d2_mm = 6.0;
  int max_attempts = 10;
  std::size_t window = 160;
  double step_mm = 2.0;
  std::size_t trials_per_cell = 10;
  std::uint64_t seed = 0;
  bool keep_trials = false;

  /// Throws kInvalidArgument or kMethodNotFound.
  void validate() const;
};

struct ResultsRow {
  std::string condition;
  std::string method;
  int target = 1;
  int success = 0;
  int prediction_failures = 0;
  int grasp_failures = 0;
  int trials = 0;
  double attempts_mean = 0.0;
  double attempts_std = 0.0;
  bool fixed = false;

  friend bool operator==(const ResultsRow&, const ResultsRow&) = default;
};

struct TrialLog {
  std::string condition;
  std::string method;
  int target = 1;
  std::uint64_t seed = 0;
  TrialResult result;
};

struct ResultsTable {
  std::vector<ResultsRow> rows;
  std::vector<TrialLog> trials;  // filled when keep_trials is set
};

/// Trial t of (condition c, target g) uses seed
/// derive_seed(derive_seed(derive_seed(seed, c), g), t) for every method, so
/// methods in a cell face the same stacks. Rows come out in
/// condition-major, then target, then method order.
ResultsTable run_experiment(const ExperimentConfig& cfg);

/// Parses the experiment JSON; knn classifiers are loaded from "model"
/// paths resolved against `base_dir`.
ExperimentConfig experiment_config_from_json(const std::string& text,
                                             const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

inline constexpr const char* kResultsCsvHeader =
    "condition,method,target,success,prediction_failures,grasp_failures,trials,"
    "attempts_mean,attempts_std";

/// Aligned text table: success as "s/n", attempts as mean±std to one decimal,
/// single-attempt Fixed rows as "1 (fixed)".
std::string render_text(const ResultsTable& table);
/// Attempts with four decimals.
std::string render_csv(const ResultsTable& table);
std::vector<ResultsRow> parse_results_csv(const std::string& text);
std::string results_to_json(const ResultsTable& table);

struct MethodComparison {
  struct Cell {
    std::string condition;
    int target = 1;
    int a_success = 0;
    int b_success = 0;
  };
  std::vector<Cell> cells;
  int wins = 0;
  int ties = 0;
  int losses = 0;
};

/// Success counts of method a versus b per (condition, target).
/// Throws kMethodNotFound.
MethodComparison compare_methods(const ResultsTable& table, const std::string& a,
                                 const std::string& b);

}  // namespace layerkit
