#include "layerkit/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "layerkit/error.hpp"

namespace layerkit {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Stack geometry

ClothStackModel::ClothStackModel(const StackConfig& config) : config_(config) {
  if (config.n_layers < 3) {
    throw Error(ErrorKind::kInvalidArgument, "a stack needs at least 3 layers");
  }
  if (!(config.layer_thickness_mm > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "layer_thickness_mm must be positive");
  }
  if (!(config.stack_variation_mm >= 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "stack_variation_mm must be >= 0");
  }
  if (!(config.gap_compression_mm >= 0.0) ||
      !(config.gap_compression_mm < config.layer_thickness_mm)) {
    throw Error(ErrorKind::kInvalidArgument,
                "gap_compression_mm must be in [0, layer_thickness_mm)");
  }
}

std::vector<double> ClothStackModel::nominal_edges() const {
  std::vector<double> edges(static_cast<std::size_t>(config_.n_layers));
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = config_.top_edge_mm - static_cast<double>(i) * config_.layer_thickness_mm;
    if (i >= 2) edges[i] += config_.gap_compression_mm;
  }
  return edges;
}

double ClothStackModel::band_center_d_vert(int layers) const {
  const std::vector<double> e = nominal_edges();
  const double t = config_.layer_thickness_mm;
  if (layers < 0 || layers > config_.n_layers) {
    throw Error(ErrorKind::kInvalidArgument, fmt::format("no band for {} layers", layers));
  }
  double h;
  if (layers == 0) {
    h = e.front() + t / 2.0;
  } else if (layers == config_.n_layers) {
    h = e.back() - t / 2.0;
  } else {
    h = (e[static_cast<std::size_t>(layers) - 1] + e[static_cast<std::size_t>(layers)]) / 2.0;
  }
  return config_.start_height_mm - h;
}

int StackInstance::layers_at_height(double h) const {
  // Edges are strictly decreasing; count the prefix at or above h.
  return static_cast<int>(std::partition_point(edges.begin(), edges.end(),
                                               [h](double e) { return e >= h; }) -
                          edges.begin());
}

StackInstance reset_stack(const ClothStackModel& model, Rng& rng) {
  const double v = model.config().stack_variation_mm;
  StackInstance s;
  s.offset_mm = v > 0.0 ? rng.uniform(-v, v) : 0.0;
  s.start_height_mm = model.config().start_height_mm;
  s.edges = model.nominal_edges();
  for (double& e : s.edges) e += s.offset_mm;
  return s;
}

// ---------------------------------------------------------------------------
// Tactile signal

namespace {

std::array<Flux, 3> orthonormal_directions(Rng& rng) {
  std::array<Flux, 3> dirs{};
  for (std::size_t d = 0; d < dirs.size(); ++d) {
    Flux v;
    for (double& x : v) x = rng.normal();
    for (std::size_t p = 0; p < d; ++p) {
      double dot = 0.0;
      for (std::size_t i = 0; i < kFluxDim; ++i) dot += v[i] * dirs[p][i];
      for (std::size_t i = 0; i < kFluxDim; ++i) v[i] -= dot * dirs[p][i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < kFluxDim; ++i) dirs[d][i] = v[i] / norm;
  }
  return dirs;
}

Flux unit_direction(Rng& rng) {
  Flux v;
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

}  // namespace

TactileSignalModel TactileSignalModel::from_params(const SignalParams& params) {
  if (!(params.separation >= 0.0) || !std::isfinite(params.separation)) {
    throw Error(ErrorKind::kInvalidArgument, "separation must be >= 0");
  }
  if (!(params.sample_rate_hz > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "sample_rate_hz must be positive");
  }
  if (!(params.episode_drift >= 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "episode_drift must be >= 0");
  }
  Rng rng(params.seed);
  const auto u = orthonormal_directions(rng);
  Flux baseline, gain;
  for (std::size_t i = 0; i < kFluxDim; ++i) {
    baseline[i] = rng.uniform(-300.0, 300.0);
    gain[i] = rng.uniform(5.0, 50.0);
  }

  const double s = params.separation;
  const double q = params.proximity;
  std::array<Flux, kNumClasses> latent{};
  for (std::size_t i = 0; i < kFluxDim; ++i) {
    latent[0][i] = 0.0;
    latent[1][i] = s * u[0][i];
    latent[2][i] = s * (u[0][i] + u[1][i]);
    latent[3][i] = latent[2][i] + s * (q * u[2][i] - kClass3PullTowardClass1 * u[1][i]);
  }

  TactileSignalModel model;
  model.params_ = params;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < kFluxDim; ++i) {
      model.means_[c][i] = baseline[i] + gain[i] * latent[c][i];
      model.stds_[c][i] = gain[i] * kLatentClassStd[c];
    }
  }
  return model;
}

TactileSignalModel TactileSignalModel::with_shift(const DomainShift& shift) const {
  if (!(shift.std_scale > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "std_scale must be positive");
  }
  Rng rng(shift.seed);
  const Flux dir = unit_direction(rng);
  TactileSignalModel out = *this;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    for (std::size_t i = 0; i < kFluxDim; ++i) {
      out.means_[c][i] += shift.mean_shift * stds_[c][i] * dir[i];
      out.stds_[c][i] *= shift.std_scale;
    }
  }
  return out;
}

std::vector<SensorReading> TactileSignalModel::sample_grasp(GraspClass c, std::size_t n,
                                                            Rng& rng) const {
  const Flux& mean = means_[c.index()];
  const Flux& sd = stds_[c.index()];
  Flux center = mean;
  if (params_.episode_drift > 0.0) {
    for (std::size_t i = 0; i < kFluxDim; ++i) {
      center[i] += params_.episode_drift * sd[i] * rng.normal();
    }
  }
  std::vector<SensorReading> out;
  out.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    Flux x;
    for (std::size_t i = 0; i < kFluxDim; ++i) x[i] = center[i] + sd[i] * rng.normal();
    out.emplace_back(x);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grasp and lift

GraspOutcome simulate_grasp(const StackInstance& stack, double d_vert_mm,
                            const TactileSignalModel& signal, std::size_t window, Rng& rng) {
  if (window < 1) throw Error(ErrorKind::kInvalidArgument, "window must be >= 1");
  GraspOutcome out;
  out.finger_height_mm = stack.start_height_mm - d_vert_mm;
  out.true_layers = stack.layers_at_height(out.finger_height_mm);
  out.readings = signal.sample_grasp(out.signal_class(), window, rng);
  return out;
}

int lift_check(const GraspOutcome& outcome, double p_slip, Rng& rng) {
  if (!(p_slip >= 0.0 && p_slip <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "p_slip must be in [0, 1]");
  }
  if (p_slip == 0.0) return outcome.true_layers;
  int retained = 0;
  for (int i = 0; i < outcome.true_layers; ++i) {
    if (!rng.bernoulli(p_slip)) ++retained;
  }
  return retained;
}

// ---------------------------------------------------------------------------
// Data collection

Dataset generate_dataset(const ClothStackModel& stack, const TactileSignalModel& signal,
                         const CollectionPlan& plan, std::uint64_t seed) {
  if (plan.n_episodes < 1) throw Error(ErrorKind::kInvalidArgument, "n_episodes must be >= 1");
  if (!(plan.range_mm >= 0.0)) throw Error(ErrorKind::kInvalidArgument, "range_mm must be >= 0");
  std::vector<double> nominal = plan.nominal_d_vert_mm;
  if (nominal.empty()) {
    for (int c = 0; c < kNumClasses; ++c) nominal.push_back(stack.band_center_d_vert(c));
  }
  const auto readings_per_episode = static_cast<std::size_t>(
      std::max(1.0, std::round(signal.sample_rate_hz() * plan.grasp_duration_s)));

  std::vector<Episode> episodes;
  episodes.reserve(plan.n_episodes);
  for (std::size_t e = 0; e < plan.n_episodes; ++e) {
    Rng rng(derive_seed(seed, e));
    const StackInstance inst = reset_stack(stack, rng);
    const double offset = plan.range_mm > 0.0 ? rng.uniform(-plan.range_mm, plan.range_mm) : 0.0;
    const double d_vert = nominal[e % nominal.size()] + offset;
    GraspOutcome g = simulate_grasp(inst, d_vert, signal, readings_per_episode, rng);

    Episode ep;
    ep.id = fmt::format("ep{:05d}", e);
    ep.label = g.signal_class();
    ep.readings = std::move(g.readings);
    ep.approach_offset_mm = offset;
    ep.sample_rate_hz = signal.sample_rate_hz();
    episodes.push_back(std::move(ep));
  }
  return Dataset(std::move(episodes), fmt::format("synthetic seed={}", seed));
}

// ---------------------------------------------------------------------------
// Config I/O

namespace {

void reject_unknown(const ordered_json& obj, std::initializer_list<const char*> known,
                    const char* where) {
  for (const auto& item : obj.items()) {
    const bool ok = std::any_of(known.begin(), known.end(),
                                [&](const char* k) { return item.key() == k; });
    if (!ok) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("{}: unknown key '{}'", where, item.key()));
    }
  }
}

template <typename T>
void read_opt(const ordered_json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->get<T>();
}

}  // namespace

SimConfig sim_config_from_json(const std::string& text) {
  SimConfig cfg;
  try {
    const auto obj = ordered_json::parse(text);
    if (!obj.is_object()) throw Error(ErrorKind::kInvalidArgument, "sim config must be an object");
    reject_unknown(obj,
                   {"n_layers", "layer_thickness_mm", "stack_variation_mm", "gap_compression_mm",
                    "p_slip", "top_edge_mm", "start_height_mm", "signal"},
                   "sim config");
    read_opt(obj, "n_layers", cfg.stack.n_layers);
    read_opt(obj, "layer_thickness_mm", cfg.stack.layer_thickness_mm);
    read_opt(obj, "stack_variation_mm", cfg.stack.stack_variation_mm);
    read_opt(obj, "gap_compression_mm", cfg.stack.gap_compression_mm);
    read_opt(obj, "top_edge_mm", cfg.stack.top_edge_mm);
    read_opt(obj, "start_height_mm", cfg.stack.start_height_mm);
    read_opt(obj, "p_slip", cfg.p_slip);
    if (auto it = obj.find("signal"); it != obj.end()) {
      reject_unknown(*it, {"separation", "proximity", "sample_rate_hz", "seed", "episode_drift"},
                     "sim config signal");
      read_opt(*it, "separation", cfg.signal.separation);
      read_opt(*it, "proximity", cfg.signal.proximity);
      read_opt(*it, "sample_rate_hz", cfg.signal.sample_rate_hz);
      read_opt(*it, "seed", cfg.signal.seed);
      read_opt(*it, "episode_drift", cfg.signal.episode_drift);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, fmt::format("sim config: {}", e.what()));
  }
  if (!(cfg.p_slip >= 0.0 && cfg.p_slip < 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "p_slip must be in [0, 1)");
  }
  ClothStackModel{cfg.stack};                    // validates geometry
  TactileSignalModel::from_params(cfg.signal);  // validates signal
  return cfg;
}

std::string sim_config_to_json(const SimConfig& cfg) {
  ordered_json obj;
  obj["n_layers"] = cfg.stack.n_layers;
  obj["layer_thickness_mm"] = cfg.stack.layer_thickness_mm;
  obj["stack_variation_mm"] = cfg.stack.stack_variation_mm;
  obj["gap_compression_mm"] = cfg.stack.gap_compression_mm;
  obj["top_edge_mm"] = cfg.stack.top_edge_mm;
  obj["start_height_mm"] = cfg.stack.start_height_mm;
  obj["p_slip"] = cfg.p_slip;
  obj["signal"] = {{"separation", cfg.signal.separation},
                   {"proximity", cfg.signal.proximity},
                   {"sample_rate_hz", cfg.signal.sample_rate_hz},
                   {"seed", cfg.signal.seed},
                   {"episode_drift", cfg.signal.episode_drift}};
  return obj.dump(2) + "\n";
}

SimConfig load_sim_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::kFileNotFound, fmt::format("sim config not found: {}", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return sim_config_from_json(buf.str());
}

// ---------------------------------------------------------------------------
// Calibration

double max_diagonal_error(const std::array<double, kNumClasses>& achieved, const Matrix4& target) {
  double err = 0.0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    err = std::max(err, std::abs(achieved[c] - target[c][c]));
  }
  return err;
}

namespace {

struct Evaluation {
  std::array<double, kNumClasses> diagonal{};
  double error = 0.0;
};

class CalibrationObjective {
 public:
  CalibrationObjective(const Matrix4& target, const CalibrationSettings& settings)
      : target_(target), settings_(settings), stack_(settings.stack) {}

  Evaluation operator()(const SignalParams& params) {
    ++evaluations_;
    const auto signal = TactileSignalModel::from_params(params);
    const Dataset ds = generate_dataset(stack_, signal, settings_.plan, settings_.data_seed);
    const CvReport report = cross_validate(ds, settings_.cv);
    Evaluation ev;
    ev.diagonal = report.per_class_accuracy;
    ev.error = max_diagonal_error(ev.diagonal, target_);
    return ev;
  }

  int evaluations() const noexcept { return evaluations_; }

 private:
  Matrix4 target_;
  const CalibrationSettings& settings_;
  ClothStackModel stack_;
  int evaluations_ = 0;
};

}  // namespace

CalibrationResult calibrate_signal_model(const Matrix4& target, const SignalParams& base,
                                         const CalibrationSettings& settings) {
  validate_row_stochastic(target, 1e-2);
  CalibrationObjective objective(target, settings);

  SignalParams best = base;
  Evaluation best_eval = objective(best);

  // Golden-section search over one knob; keeps the best point seen anywhere.
  auto search = [&](double SignalParams::*knob, double lo, double hi) {
    constexpr double kInvPhi = 0.6180339887498949;
    auto eval_at = [&](double x) {
      SignalParams p = best;
      p.*knob = x;
      Evaluation ev = objective(p);
      if (ev.error < best_eval.error) {
        best_eval = ev;
        best = p;
      }
      return ev.error;
    };
    double a = lo, b = hi;
    double x1 = b - kInvPhi * (b - a), x2 = a + kInvPhi * (b - a);
    double f1 = eval_at(x1), f2 = eval_at(x2);
    for (int step = 0; step < settings.steps_per_search; ++step) {
      if (best_eval.error <= settings.good_enough) return;
      if (f1 <= f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - kInvPhi * (b - a);
        f1 = eval_at(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + kInvPhi * (b - a);
        f2 = eval_at(x2);
      }
    }
  };

  for (int round = 0; round < settings.max_rounds; ++round) {
    if (best_eval.error <= settings.good_enough) break;
    search(&SignalParams::separation, settings.separation_lo, settings.separation_hi);
    if (best_eval.error <= settings.good_enough) break;
    search(&SignalParams::proximity, settings.proximity_lo, settings.proximity_hi);
  }

  CalibrationResult result;
  result.params = best;
  result.diagonal = best_eval.diagonal;
  result.max_abs_error = best_eval.error;
  result.evaluations = objective.evaluations();
  if (result.max_abs_error > settings.tolerance) {
    throw Error(ErrorKind::kCalibrationFailed,
                fmt::format("CalibrationFailed: best diagonal error {:.3f} exceeds {:.3f}",
                            result.max_abs_error, settings.tolerance));
  }
  return result;
}

}  // namespace layerkit
