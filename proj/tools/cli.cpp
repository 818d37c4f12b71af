#include "cli.hpp"

#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "layerkit/classify.hpp"
#include "layerkit/dataset.hpp"
#include "layerkit/error.hpp"
#include "layerkit/eval.hpp"
#include "layerkit/experiment.hpp"
#include "layerkit/policy.hpp"
#include "layerkit/sim.hpp"

namespace layerkit::cli {
namespace {

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorKind::kIo, fmt::format("cannot write {}", path));
  f << content;
  if (!f) throw Error(ErrorKind::kIo, fmt::format("write failed: {}", path));
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::kFileNotFound, fmt::format("file not found: {}", path));
  std::ostringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

SimConfig sim_config_or_default(const std::string& path) {
  return path.empty() ? SimConfig{} : load_sim_config(path);
}

std::string format_matrix(const Matrix4& m) {
  std::string out = fmt::format("{:<14}{:>8}{:>8}{:>8}{:>8}\n", "class \\ pred", "0", "1", "2", "3");
  for (int r = 0; r < kNumClasses; ++r) {
    out += fmt::format("{:<14}", r);
    for (int c = 0; c < kNumClasses; ++c) out += fmt::format("{:>8.3f}", m[r][c]);
    out += "\n";
  }
  return out;
}

Matrix4 confusion_from_arg(const std::string& arg) {
  if (arg == "reference") return renormalize_rows(kReferenceConfusion);
  try {
    return renormalize_rows(nlohmann::json::parse(read_file(arg)).get<Matrix4>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, fmt::format("confusion file {}: {}", arg, e.what()));
  }
}

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

// ---------------------------------------------------------------------------

struct CollectArgs {
  std::string config;
  std::size_t episodes = 54;
  double range_mm = 2.0;
  std::vector<double> heights;
  std::string out;
  std::uint64_t seed = 0;
};

void cmd_collect(const CollectArgs& a, Streams io) {
  const SimConfig sim = sim_config_or_default(a.config);
  CollectionPlan plan;
  plan.n_episodes = a.episodes;
  plan.range_mm = a.range_mm;
  plan.nominal_d_vert_mm = a.heights;
  const Dataset ds = generate_dataset(ClothStackModel(sim.stack),
                                      TactileSignalModel::from_params(sim.signal), plan, a.seed);
  save_dataset(ds, a.out);

  std::map<int, std::size_t> histogram;
  for (const Episode& ep : ds.episodes()) ++histogram[ep.label.value()];
  io.out << fmt::format("wrote {} episodes ({} readings) to {}\n", ds.size(), ds.total_readings(),
                        a.out);
  for (const auto& [label, count] : histogram) {
    io.out << fmt::format("  label {}: {}\n", label, count);
  }
}

struct CalibrateArgs {
  std::string config;
  std::size_t episodes = 54;
  std::size_t folds = 10;
  int k = 10;
  double split = 0.95;
  double tolerance = 0.08;
  std::string target = "reference";
  std::string out;
  std::uint64_t seed = 0;
};

void cmd_calibrate(const CalibrateArgs& a, Streams io) {
  SimConfig sim = sim_config_or_default(a.config);
  CalibrationSettings settings;
  settings.stack = sim.stack;
  settings.plan.n_episodes = a.episodes;
  settings.data_seed = a.seed;
  settings.cv = CvSettings{a.k, a.folds, a.split, a.seed};
  settings.tolerance = a.tolerance;
  const Matrix4 target = confusion_from_arg(a.target);
  const CalibrationResult result = calibrate_signal_model(target, sim.signal, settings);
  sim.signal = result.params;
  write_file(a.out, sim_config_to_json(sim));
  io.out << fmt::format(
      "separation {:.4f}, proximity {:.4f} after {} evaluations\n"
      "diagonal {:.3f} {:.3f} {:.3f} {:.3f} (max error {:.3f})\n",
      result.params.separation, result.params.proximity, result.evaluations, result.diagonal[0],
      result.diagonal[1], result.diagonal[2], result.diagonal[3], result.max_abs_error);
}

struct TrainArgs {
  std::string data;
  int k = 10;
  double split = 0.95;
  std::string out;
  std::uint64_t seed = 0;
  bool lenient = false;
};

void cmd_train(const TrainArgs& a, Streams io) {
  const Dataset ds = load_dataset(a.data, {a.lenient});
  const Split split = split_by_episode(ds, {a.split, a.seed});
  const KnnModel model = KnnModel::fit(split.train, a.k, {ds.provenance(), a.seed});
  save_model(model, a.out);
  io.out << fmt::format("trained k = {} on {} episodes ({} readings)\n", a.k, split.train.size(),
                        split.train.total_readings());
  if (!split.val.empty()) {
    const ConfusionMatrix cm = evaluate(model, split.val);
    io.out << fmt::format("held-out: {} episodes, {} readings\n", split.val.size(),
                          split.val.total_readings());
    io.out << format_matrix(row_normalize(cm).rates);
    io.out << fmt::format("held-out balanced accuracy {:.4f}\n", balanced_accuracy(cm));
  }
}

struct CrossvalArgs {
  std::string data;
  std::size_t folds = 100;
  int k = 10;
  double split = 0.95;
  std::string out;
  std::uint64_t seed = 0;
  bool lenient = false;
};

void cmd_crossval(const CrossvalArgs& a, Streams io) {
  const Dataset ds = load_dataset(a.data, {a.lenient});
  const CvReport report = cross_validate(ds, {a.k, a.folds, a.split, a.seed});
  write_file(a.out, cv_report_to_json(report));
  io.out << format_cv_report(report);
}

struct TrialArgs {
  std::string config;
  std::string classifier = "knn";
  std::string model;
  std::string confusion = "reference";
  std::string sampling = "shared";
  std::string policy = "feedback";
  int target = 1;
  double d1 = 2.0;
  double d2 = 6.0;
  int max_attempts = 10;
  std::size_t window = 160;
  bool experimental = false;
  std::string out;
  std::uint64_t seed = 0;
};

void cmd_trial(const TrialArgs& a, Streams io) {
  const SimConfig sim = sim_config_or_default(a.config);
  PolicyConfig pc = PolicyConfig::from_tuned_heights(policy_kind_from_string(a.policy), a.target,
                                                     a.d1, a.d2);
  pc.max_attempts = a.max_attempts;
  pc.window = a.window;
  pc.validate(a.experimental);

  std::unique_ptr<WindowClassifier> classifier;
  if (a.classifier == "knn") {
    if (a.model.empty()) throw Error(ErrorKind::kInvalidArgument, "--model is required for knn");
    classifier = std::make_unique<ReadingWindowClassifier>(
        std::make_shared<const KnnModel>(load_model(a.model)));
  } else if (a.classifier == "stochastic") {
    const auto sampling = a.sampling == "independent"
                              ? StochasticWindowClassifier::Sampling::kIndependent
                              : StochasticWindowClassifier::Sampling::kShared;
    classifier =
        std::make_unique<StochasticWindowClassifier>(confusion_from_arg(a.confusion), sampling);
  } else if (a.classifier == "oracle") {
    classifier = std::make_unique<OracleWindowClassifier>();
  } else {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("unknown classifier '{}' (valid: knn, stochastic, oracle)",
                            a.classifier));
  }

  const TrialEnv env{ClothStackModel(sim.stack), TactileSignalModel::from_params(sim.signal),
                     sim.p_slip};
  const TrialResult result = run_trial(pc, env, *classifier, a.seed);
  const std::string json = trial_to_json(result, a.policy, a.target, a.seed) + "\n";
  if (a.out.empty()) {
    io.out << json;
  } else {
    write_file(a.out, json);
    io.out << fmt::format("{} after {} attempt(s), failure: {}\n",
                          result.success ? "success" : "failure", result.attempts_used,
                          to_string(result.failure));
  }
}

struct ExperimentArgs {
  std::string config;
  std::string out_csv;
  std::string out_json;
  std::optional<std::size_t> trials;
  bool verbose = false;
  std::optional<std::uint64_t> seed;
};

void cmd_experiment(const ExperimentArgs& a, Streams io) {
  ExperimentConfig cfg = load_experiment_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.trials) cfg.trials_per_cell = *a.trials;
  cfg.keep_trials = cfg.keep_trials || a.verbose;
  const ResultsTable table = run_experiment(cfg);
  if (!a.out_csv.empty()) write_file(a.out_csv, render_csv(table));
  if (!a.out_json.empty()) write_file(a.out_json, results_to_json(table));
  io.out << render_text(table);
}

struct ReportArgs {
  std::string csv;
};

void cmd_report(const ReportArgs& a, Streams io) {
  ResultsTable table;
  table.rows = parse_results_csv(read_file(a.csv));
  io.out << render_text(table);
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return kExitInternal;
    default: return kExitUsage;
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tactile cloth-layer grasp classification and grasp-policy simulator", "layerkit"};
  app.require_subcommand(1);

  CollectArgs collect;
  auto* c = app.add_subcommand("collect", "Generate a synthetic episode dataset (JSON Lines)");
  c->add_option("--config", collect.config, "Simulation config JSON");
  c->add_option("--episodes", collect.episodes, "Number of episodes")->check(CLI::PositiveNumber);
  c->add_option("--range-mm", collect.range_mm, "Approach offset range (+/- mm)")
      ->check(CLI::NonNegativeNumber);
  c->add_option("--heights", collect.heights, "Nominal d_vert values cycled over episodes (mm)");
  c->add_option("--out", collect.out, "Output dataset path")->required();
  c->add_option("--seed", collect.seed, "Random seed");

  CalibrateArgs calibrate;
  auto* cal = app.add_subcommand("calibrate", "Fit signal separation to a target confusion matrix");
  cal->add_option("--config", calibrate.config, "Base simulation config JSON");
  cal->add_option("--episodes", calibrate.episodes, "Episodes per evaluation");
  cal->add_option("--folds", calibrate.folds, "Cross-validation folds per evaluation");
  cal->add_option("--k", calibrate.k, "Neighbours");
  cal->add_option("--split", calibrate.split, "Training fraction");
  cal->add_option("--tolerance", calibrate.tolerance, "Maximum diagonal error");
  cal->add_option("--target", calibrate.target, "'reference' or a JSON 4x4 matrix file");
  cal->add_option("--out", calibrate.out, "Calibrated simulation config path")->required();
  cal->add_option("--seed", calibrate.seed, "Random seed");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train the kNN classifier on an episode split");
  t->add_option("--data", train.data, "Dataset (JSON Lines)")->required();
  t->add_option("--k", train.k, "Neighbours");
  t->add_option("--split", train.split, "Training fraction of episodes");
  t->add_option("--out", train.out, "Model output path")->required();
  t->add_option("--seed", train.seed, "Random seed");
  t->add_flag("--lenient", train.lenient, "Ignore unknown keys in the dataset");

  CrossvalArgs crossval;
  auto* cv = app.add_subcommand("crossval", "Episode-grouped cross-validation of the kNN classifier");
  cv->add_option("--data", crossval.data, "Dataset (JSON Lines)")->required();
  cv->add_option("--folds", crossval.folds, "Number of folds");
  cv->add_option("--k", crossval.k, "Neighbours");
  cv->add_option("--split", crossval.split, "Training fraction of episodes per fold");
  cv->add_option("--out", crossval.out, "Report output path")->required();
  cv->add_option("--seed", crossval.seed, "Random seed");
  cv->add_flag("--lenient", crossval.lenient, "Ignore unknown keys in the dataset");

  TrialArgs trial;
  auto* tr = app.add_subcommand("trial", "Run one grasp trial");
  tr->add_option("--config", trial.config, "Simulation config JSON");
  tr->add_option("--classifier", trial.classifier, "knn | stochastic | oracle");
  tr->add_option("--model", trial.model, "kNN model file");
  tr->add_option("--confusion", trial.confusion, "'reference' or a JSON 4x4 matrix file");
  tr->add_option("--sampling", trial.sampling, "shared | independent")
      ->check(CLI::IsMember({"shared", "independent"}));
  tr->add_option("--policy", trial.policy, "fixed | random | feedback");
  tr->add_option("--target", trial.target, "Layers to grasp");
  tr->add_option("--d1", trial.d1, "Tuned one-layer d_vert (mm)");
  tr->add_option("--d2", trial.d2, "Tuned two-layer d_vert (mm)");
  tr->add_option("--max-attempts", trial.max_attempts, "Attempt budget");
  tr->add_option("--window", trial.window, "Readings per grasp");
  tr->add_flag("--experimental", trial.experimental, "Allow a 3-layer target");
  tr->add_option("--out", trial.out, "Trial JSON path (stdout when omitted)");
  tr->add_option("--seed", trial.seed, "Random seed");

  ExperimentArgs experiment;
  auto* ex = app.add_subcommand("experiment", "Run a batch experiment");
  ex->add_option("--config", experiment.config, "Experiment config JSON")->required();
  ex->add_option("--out-csv", experiment.out_csv, "Results CSV path");
  ex->add_option("--out-json", experiment.out_json, "Results JSON path");
  ex->add_option("--trials", experiment.trials, "Override trials per cell");
  ex->add_flag("--verbose", experiment.verbose, "Include per-trial records in the JSON");
  ex->add_option("--seed", experiment.seed, "Override the config seed");

  ReportArgs report;
  auto* rp = app.add_subcommand("report", "Render a saved results CSV as a text table");
  rp->add_option("--csv", report.csv, "Results CSV")->required();
  rp->add_option("--seed", [](const CLI::results_t&) { return true; }, "Accepted, unused");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  const Streams io{out, err};
  try {
    if (*c) cmd_collect(collect, io);
    else if (*cal) cmd_calibrate(calibrate, io);
    else if (*t) cmd_train(train, io);
    else if (*cv) cmd_crossval(crossval, io);
    else if (*tr) cmd_trial(trial, io);
    else if (*ex) cmd_experiment(experiment, io);
    else if (*rp) cmd_report(report, io);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}

}  // namespace layerkit::cli
