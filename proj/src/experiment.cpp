#include "layerkit/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "layerkit/error.hpp"
#include "layerkit/parallel.hpp"

namespace layerkit {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kBuiltinOracle = "oracle";

std::unique_ptr<WindowClassifier> make_classifier(const ClassifierSpec& spec) {
  switch (spec.type) {
    case ClassifierSpec::Type::kKnn:
      return std::make_unique<ReadingWindowClassifier>(spec.model);
    case ClassifierSpec::Type::kStochastic:
      return std::make_unique<StochasticWindowClassifier>(spec.confusion, spec.sampling);
    case ClassifierSpec::Type::kOracle:
      return std::make_unique<OracleWindowClassifier>();
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown classifier type");
}

const ClassifierSpec& lookup_classifier(const ExperimentConfig& cfg, const std::string& name) {
  static const ClassifierSpec oracle{};
  if (auto it = cfg.classifiers.find(name); it != cfg.classifiers.end()) return it->second;
  if (name == kBuiltinOracle) return oracle;
  throw Error(ErrorKind::kMethodNotFound, fmt::format("unknown classifier '{}'", name));
}

}  // namespace

void ExperimentConfig::validate() const {
  if (trials_per_cell < 1) {
    throw Error(ErrorKind::kInvalidArgument, "trials_per_cell must be >= 1");
  }
  if (methods.empty()) throw Error(ErrorKind::kInvalidArgument, "no methods configured");
  if (conditions.empty()) throw Error(ErrorKind::kInvalidArgument, "no conditions configured");
  if (targets.empty()) throw Error(ErrorKind::kInvalidArgument, "no targets configured");
  std::set<std::string> names;
  for (const MethodSpec& m : methods) {
    if (!names.insert(m.name).second) {
      throw Error(ErrorKind::kInvalidArgument, fmt::format("duplicate method '{}'", m.name));
    }
    const ClassifierSpec& spec = lookup_classifier(*this, m.classifier);
    if (spec.type == ClassifierSpec::Type::kKnn && !spec.model) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("classifier '{}' has no model loaded", m.classifier));
    }
    if (spec.type == ClassifierSpec::Type::kStochastic) validate_row_stochastic(spec.confusion);
  }
  for (int t : targets) {
    PolicyConfig p = PolicyConfig::from_tuned_heights(PolicyKind::kFeedback, t, d1_mm, d2_mm);
    p.validate();
  }
  ClothStackModel{env.stack};
}

ResultsTable run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const ClothStackModel stack(cfg.env.stack);
  const TactileSignalModel base_signal = TactileSignalModel::from_params(cfg.env.signal);

  ResultsTable table;
  for (std::size_t ci = 0; ci < cfg.conditions.size(); ++ci) {
    const Condition& cond = cfg.conditions[ci];
    const TrialEnv env{stack, base_signal.with_shift(cond.shift), cfg.env.p_slip};
    const std::uint64_t cond_seed = derive_seed(cfg.seed, ci);

    for (int target : cfg.targets) {
      const std::uint64_t cell_seed = derive_seed(cond_seed, static_cast<std::uint64_t>(target));
      for (const MethodSpec& method : cfg.methods) {
        PolicyConfig pc =
            PolicyConfig::from_tuned_heights(method.kind, target, cfg.d1_mm, cfg.d2_mm);
        pc.max_attempts = cfg.max_attempts;
        pc.window = cfg.window;
        pc.step_mm = cfg.step_mm;
        const ClassifierSpec& spec = lookup_classifier(cfg, method.classifier);

        std::vector<TrialResult> results(cfg.trials_per_cell);
        parallel_for(cfg.trials_per_cell, [&](std::size_t t) {
          auto classifier = make_classifier(spec);
          results[t] = run_trial(pc, env, *classifier, derive_seed(cell_seed, t));
        });

        ResultsRow row;
        row.condition = cond.name;
        row.method = method.name;
        row.target = target;
        row.trials = static_cast<int>(results.size());
        row.fixed = method.kind == PolicyKind::kFixed;
        double sum = 0.0;
        for (const TrialResult& r : results) {
          switch (r.failure) {
            case FailureType::kNone: ++row.success; break;
            case FailureType::kPrediction: ++row.prediction_failures; break;
            case FailureType::kGrasp: ++row.grasp_failures; break;
          }
          sum += r.attempts_used;
        }
        row.attempts_mean = sum / row.trials;
        if (row.trials > 1) {
          double ss = 0.0;
          for (const TrialResult& r : results) {
            ss += (r.attempts_used - row.attempts_mean) * (r.attempts_used - row.attempts_mean);
          }
          row.attempts_std = std::sqrt(ss / (row.trials - 1));
        }
        table.rows.push_back(row);

        if (cfg.keep_trials) {
          for (std::size_t t = 0; t < results.size(); ++t) {
            table.trials.push_back({cond.name, method.name, target, derive_seed(cell_seed, t),
                                    std::move(results[t])});
          }
        }
      }
    }
  }
  return table;
}

// ---------------------------------------------------------------------------
// Config parsing

ExperimentConfig experiment_config_from_json(const std::string& text,
                                             const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  try {
    const auto obj = ordered_json::parse(text);
    for (const auto& item : obj.items()) {
      static const std::set<std::string> known = {
          "seed",       "trials_per_cell", "keep_trials", "env",         "tuned_heights_mm",
          "policy",     "targets",         "conditions",  "classifiers", "methods"};
      if (!known.count(item.key())) {
        throw Error(ErrorKind::kInvalidArgument,
                    fmt::format("experiment config: unknown key '{}'", item.key()));
      }
    }
    cfg.seed = obj.value("seed", std::uint64_t{0});
    cfg.trials_per_cell = obj.value("trials_per_cell", std::size_t{10});
    cfg.keep_trials = obj.value("keep_trials", false);
    if (auto it = obj.find("env"); it != obj.end()) cfg.env = sim_config_from_json(it->dump());
    if (auto it = obj.find("tuned_heights_mm"); it != obj.end()) {
      cfg.d1_mm = it->at("d1").get<double>();
      cfg.d2_mm = it->at("d2").get<double>();
    }
    if (auto it = obj.find("policy"); it != obj.end()) {
      cfg.max_attempts = it->value("max_attempts", cfg.max_attempts);
      cfg.window = it->value("window", cfg.window);
      cfg.step_mm = it->value("step_mm", cfg.step_mm);
    }
    if (auto it = obj.find("targets"); it != obj.end()) cfg.targets = it->get<std::vector<int>>();
    if (auto it = obj.find("conditions"); it != obj.end()) {
      cfg.conditions.clear();
      for (const auto& c : *it) {
        Condition cond;
        cond.name = c.at("name").get<std::string>();
        cond.shift.mean_shift = c.value("mean_shift", 0.0);
        cond.shift.std_scale = c.value("std_scale", 1.0);
        cond.shift.seed = c.value("seed", std::uint64_t{0});
        cfg.conditions.push_back(cond);
      }
    }
    if (auto it = obj.find("classifiers"); it != obj.end()) {
      for (const auto& [name, c] : it->items()) {
        ClassifierSpec spec;
        const auto type = c.at("type").get<std::string>();
        if (type == "knn") {
          spec.type = ClassifierSpec::Type::kKnn;
          std::filesystem::path p = c.at("model").get<std::string>();
          if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
          spec.model_path = p.string();
          spec.model = std::make_shared<const KnnModel>(load_model(p));
        } else if (type == "stochastic") {
          spec.type = ClassifierSpec::Type::kStochastic;
          spec.confusion = c.at("confusion").get<Matrix4>();
          if (c.value("renormalize", false)) spec.confusion = renormalize_rows(spec.confusion);
          const auto sampling = c.value("sampling", std::string{"shared"});
          if (sampling == "shared") {
            spec.sampling = StochasticWindowClassifier::Sampling::kShared;
          } else if (sampling == "independent") {
            spec.sampling = StochasticWindowClassifier::Sampling::kIndependent;
          } else {
            throw Error(ErrorKind::kInvalidArgument,
                        fmt::format("classifier '{}': sampling must be shared|independent", name));
          }
        } else if (type == "oracle") {
          spec.type = ClassifierSpec::Type::kOracle;
        } else {
          throw Error(ErrorKind::kInvalidArgument,
                      fmt::format("classifier '{}': type must be knn|stochastic|oracle", name));
        }
        cfg.classifiers[name] = std::move(spec);
      }
    }
    if (auto it = obj.find("methods"); it != obj.end()) {
      for (const auto& m : *it) {
        MethodSpec spec;
        spec.name = m.at("name").get<std::string>();
        spec.kind = policy_kind_from_string(m.at("policy").get<std::string>());
        spec.classifier = m.value("classifier", std::string{kBuiltinOracle});
        cfg.methods.push_back(std::move(spec));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, fmt::format("experiment config: {}", e.what()));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::kFileNotFound,
                fmt::format("experiment config not found: {}", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return experiment_config_from_json(buf.str(), path.parent_path());
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string attempts_cell(const ResultsRow& row) {
  if (row.fixed && row.attempts_std == 0.0 && row.attempts_mean == 1.0) return "1 (fixed)";
  return fmt::format("{:.1f}±{:.1f}", row.attempts_mean, row.attempts_std);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

std::string render_text(const ResultsTable& table) {
  constexpr const char* kRowFormat = "{:<16} {:<20} {:>6} {:>8} {:>10} {:>8} {:>12}\n";
  std::string out = fmt::format(kRowFormat, "Condition", "Method", "Target", "Success",
                                "Prediction", "Grasp", "Attempts");
  for (const ResultsRow& r : table.rows) {
    const std::string prediction =
        r.fixed ? std::string("-") : fmt::format("{}/{}", r.prediction_failures, r.trials);
    out += fmt::format(kRowFormat, r.condition, r.method, r.target,
                       fmt::format("{}/{}", r.success, r.trials), prediction,
                       fmt::format("{}/{}", r.grasp_failures, r.trials), attempts_cell(r));
  }
  return out;
}

std::string render_csv(const ResultsTable& table) {
  std::string out = std::string(kResultsCsvHeader) + "\n";
  for (const ResultsRow& r : table.rows) {
    out += fmt::format("{},{},{},{},{},{},{},{:.4f},{:.4f}\n", r.condition, r.method, r.target,
                       r.success, r.prediction_failures, r.grasp_failures, r.trials,
                       r.attempts_mean, r.attempts_std);
  }
  return out;
}

std::vector<ResultsRow> parse_results_csv(const std::string& text) {
  std::vector<ResultsRow> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line == kResultsCsvHeader) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw MalformedLineError(line_no, "expected 9 CSV fields");
    try {
      ResultsRow r;
      r.condition = f[0];
      r.method = f[1];
      r.target = std::stoi(f[2]);
      r.success = std::stoi(f[3]);
      r.prediction_failures = std::stoi(f[4]);
      r.grasp_failures = std::stoi(f[5]);
      r.trials = std::stoi(f[6]);
      r.attempts_mean = std::stod(f[7]);
      r.attempts_std = std::stod(f[8]);
      r.fixed = r.method.rfind("fixed", 0) == 0;
      rows.push_back(std::move(r));
    } catch (const std::logic_error& e) {
      throw MalformedLineError(line_no, e.what());
    }
  }
  return rows;
}

std::string results_to_json(const ResultsTable& table) {
  ordered_json obj;
  auto rows = ordered_json::array();
  for (const ResultsRow& r : table.rows) {
    rows.push_back({{"condition", r.condition},
                    {"method", r.method},
                    {"target", r.target},
                    {"success", r.success},
                    {"prediction_failures", r.prediction_failures},
                    {"grasp_failures", r.grasp_failures},
                    {"trials", r.trials},
                    {"attempts_mean", r.attempts_mean},
                    {"attempts_std", r.attempts_std}});
  }
  obj["rows"] = std::move(rows);
  if (!table.trials.empty()) {
    auto trials = ordered_json::array();
    for (const TrialLog& t : table.trials) {
      auto rec = ordered_json::parse(trial_to_json(t.result, t.method, t.target, t.seed));
      rec["condition"] = t.condition;
      trials.push_back(std::move(rec));
    }
    obj["trials"] = std::move(trials);
  }
  return obj.dump(2) + "\n";
}

MethodComparison compare_methods(const ResultsTable& table, const std::string& a,
                                 const std::string& b) {
  auto has = [&](const std::string& m) {
    return std::any_of(table.rows.begin(), table.rows.end(),
                       [&](const ResultsRow& r) { return r.method == m; });
  };
  for (const auto* m : {&a, &b}) {
    if (!has(*m)) throw Error(ErrorKind::kMethodNotFound, fmt::format("MethodNotFound: '{}'", *m));
  }

  MethodComparison out;
  for (const ResultsRow& ra : table.rows) {
    if (ra.method != a) continue;
    auto rb = std::find_if(table.rows.begin(), table.rows.end(), [&](const ResultsRow& r) {
      return r.method == b && r.condition == ra.condition && r.target == ra.target;
    });
    if (rb == table.rows.end()) continue;
    out.cells.push_back({ra.condition, ra.target, ra.success, rb->success});
    if (ra.success > rb->success) {
      ++out.wins;
    } else if (ra.success == rb->success) {
      ++out.ties;
    } else {
      ++out.losses;
    }
  }
  return out;
}

}  // namespace layerkit
