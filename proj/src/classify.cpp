#include "layerkit/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "layerkit/error.hpp"

namespace layerkit {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Normalizer

Flux Normalizer::apply(const Flux& x) const {
  Flux z;
  for (std::size_t i = 0; i < kFluxDim; ++i) z[i] = (x[i] - means[i]) / stds[i];
  return z;
}

Flux Normalizer::invert(const Flux& z) const {
  Flux x;
  for (std::size_t i = 0; i < kFluxDim; ++i) x[i] = z[i] * stds[i] + means[i];
  return x;
}

Normalizer fit_normalizer(const Dataset& train) {
  const std::size_t n = train.total_readings();
  if (n == 0) {
    throw Error(ErrorKind::kEmptyTrainingSet, "cannot fit a normalizer on no readings");
  }
  // Two passes keep the variance accurate for large sensor offsets.
  std::array<long double, kFluxDim> sum{};
  for (const Episode& ep : train.episodes()) {
    for (const SensorReading& r : ep.readings) {
      for (std::size_t i = 0; i < kFluxDim; ++i) sum[i] += r[i];
    }
  }
  Normalizer nrm;
  for (std::size_t i = 0; i < kFluxDim; ++i) {
    nrm.means[i] = static_cast<double>(sum[i] / static_cast<long double>(n));
  }
  std::array<long double, kFluxDim> sq{};
  for (const Episode& ep : train.episodes()) {
    for (const SensorReading& r : ep.readings) {
      for (std::size_t i = 0; i < kFluxDim; ++i) {
        const long double d = r[i] - nrm.means[i];
        sq[i] += d * d;
      }
    }
  }
  for (std::size_t i = 0; i < kFluxDim; ++i) {
    const double sd = std::sqrt(static_cast<double>(sq[i] / static_cast<long double>(n)));
    nrm.stds[i] = sd < 1e-12 ? 1.0 : sd;
  }
  return nrm;
}

// ---------------------------------------------------------------------------
// kNN

KnnModel::KnnModel(Normalizer normalizer, std::vector<Flux> points,
                   std::vector<GraspClass> labels, int k, Meta meta)
    : normalizer_(normalizer), k_(k), meta_(std::move(meta)) {
  if (points.size() != labels.size()) {
    throw Error(ErrorKind::kInvalidArgument, "points and labels differ in length");
  }
  if (k < 1) throw Error(ErrorKind::kInvalidArgument, "k must be >= 1");
  if (points.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::kInsufficientData,
                fmt::format("InsufficientData: k = {} but only {} training readings",
                            k, points.size()));
  }
  for (std::size_t i = 0; i < kFluxDim; ++i) {
    if (!(normalizer_.stds[i] > 0.0) || !std::isfinite(normalizer_.means[i])) {
      throw Error(ErrorKind::kInvalidArgument, "normalizer has non-positive std");
    }
  }
  points_.reserve(points.size() * kFluxDim);
  labels_.reserve(labels.size());
  for (std::size_t p = 0; p < points.size(); ++p) {
    points_.insert(points_.end(), points[p].begin(), points[p].end());
    labels_.push_back(static_cast<std::uint8_t>(labels[p].value()));
  }
}

KnnModel KnnModel::fit(const Dataset& train, int k, Meta meta) {
  if (k < 1) throw Error(ErrorKind::kInvalidArgument, "k must be >= 1");
  const std::size_t n = train.total_readings();
  if (n < static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::kInsufficientData,
                fmt::format("InsufficientData: k = {} but only {} training readings", k, n));
  }
  Normalizer nrm = fit_normalizer(train);
  std::vector<Flux> points;
  std::vector<GraspClass> labels;
  points.reserve(n);
  labels.reserve(n);
  for (const Episode& ep : train.episodes()) {
    for (const SensorReading& r : ep.readings) {
      points.push_back(nrm.apply(r.flux()));
      labels.push_back(ep.label);
    }
  }
  return KnnModel(nrm, std::move(points), std::move(labels), k, std::move(meta));
}

Flux KnnModel::point(std::size_t i) const {
  Flux f;
  std::copy_n(points_.begin() + static_cast<std::ptrdiff_t>(i * kFluxDim), kFluxDim,
              f.begin());
  return f;
}

GraspClass KnnModel::predict(const SensorReading& reading) const {
  return predict_normalized(normalizer_.apply(reading.flux()));
}

GraspClass KnnModel::predict_normalized(const Flux& z) const {
  struct Neighbor {
    double dist2;
    std::size_t index;
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  const auto k = static_cast<std::size_t>(k_);
  // Sorted ascending by (dist2, index). Points arrive in index order, so a
  // candidate tying the current worst distance is always the later one and is
  // rejected by the strict comparison.
  std::vector<Neighbor> best;
  best.reserve(k + 1);
  const double* p = points_.data();
  const std::size_t n = labels_.size();
  for (std::size_t i = 0; i < n; ++i, p += kFluxDim) {
    // Summation runs over features in order; a partial sum that already
    // reaches the current k-th distance cannot qualify, so stop early.
    const double worst = best.size() == k ? best.back().dist2 : kInf;
    double d2 = 0.0;
    std::size_t j = 0;
    for (; j < 5; ++j) d2 += (p[j] - z[j]) * (p[j] - z[j]);
    if (d2 >= worst) continue;
    for (; j < kFluxDim; ++j) d2 += (p[j] - z[j]) * (p[j] - z[j]);
    if (d2 >= worst) continue;
    auto pos = std::upper_bound(
        best.begin(), best.end(), d2,
        [](double value, const Neighbor& nb) { return value < nb.dist2; });
    best.insert(pos, Neighbor{d2, i});
    if (best.size() > k) best.pop_back();
  }

  std::array<int, kNumClasses> votes{};
  std::array<double, kNumClasses> total_dist{};
  for (const Neighbor& nb : best) {
    votes[labels_[nb.index]] += 1;
    total_dist[labels_[nb.index]] += std::sqrt(nb.dist2);
  }
  int winner = 0;
  for (int c = 1; c < kNumClasses; ++c) {
    if (votes[c] > votes[winner] ||
        (votes[c] == votes[winner] && total_dist[c] < total_dist[winner])) {
      winner = c;
    }
  }
  return GraspClass(winner);
}

// ---------------------------------------------------------------------------
// Model file

std::string serialize_model(const KnnModel& model) {
  ordered_json obj;
  obj["k"] = model.k();
  obj["normalizer"] = {{"means", model.normalizer().means},
                       {"stds", model.normalizer().stds}};
  ordered_json points = ordered_json::array();
  for (std::size_t i = 0; i < model.size(); ++i) {
    points.push_back({{"x", model.point(i)}, {"y", model.label(i).value()}});
  }
  obj["points"] = std::move(points);
  obj["meta"] = {{"source", model.meta().source}, {"seed", model.meta().seed}};
  return obj.dump() + "\n";
}

namespace {

Flux flux_from_json(const ordered_json& arr, const char* what) {
  if (!arr.is_array() || arr.size() != kFluxDim) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("model: '{}' must hold {} numbers", what, kFluxDim));
  }
  Flux f;
  for (std::size_t i = 0; i < kFluxDim; ++i) {
    if (!arr[i].is_number()) {
      throw Error(ErrorKind::kInvalidArgument, fmt::format("model: '{}' has a non-number", what));
    }
    f[i] = arr[i].get<double>();
  }
  return f;
}

}  // namespace

KnnModel parse_model(const std::string& text) {
  ordered_json obj;
  try {
    obj = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, fmt::format("model: {}", e.what()));
  }
  try {
    Normalizer nrm;
    nrm.means = flux_from_json(obj.at("normalizer").at("means"), "means");
    nrm.stds = flux_from_json(obj.at("normalizer").at("stds"), "stds");
    std::vector<Flux> points;
    std::vector<GraspClass> labels;
    const auto& pts = obj.at("points");
    points.reserve(pts.size());
    labels.reserve(pts.size());
    for (const auto& p : pts) {
      points.push_back(flux_from_json(p.at("x"), "x"));
      labels.emplace_back(p.at("y").get<int>());
    }
    KnnModel::Meta meta;
    if (auto it = obj.find("meta"); it != obj.end()) {
      meta.source = it->value("source", std::string{});
      meta.seed = it->value("seed", std::uint64_t{0});
    }
    return KnnModel(nrm, std::move(points), std::move(labels), obj.at("k").get<int>(),
                    std::move(meta));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kInvalidArgument, fmt::format("model: {}", e.what()));
  }
}

void save_model(const KnnModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write {}", path.string()));
  out << serialize_model(model);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("write failed: {}", path.string()));
}

KnnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::kFileNotFound, fmt::format("model file not found: {}", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_model(buf.str());
}

// ---------------------------------------------------------------------------
// Window aggregation

GraspClass aggregate_mode(std::span<const GraspClass> window) {
  if (window.empty()) throw Error(ErrorKind::kEmptyWindow, "empty prediction window");
  std::array<std::size_t, kNumClasses> counts{};
  for (GraspClass c : window) ++counts[c.index()];
  const auto best = std::max_element(counts.begin(), counts.end());  // first max
  return GraspClass(static_cast<int>(best - counts.begin()));
}

// ---------------------------------------------------------------------------
// Stochastic classifier

void validate_row_stochastic(const Matrix4& m, double tolerance) {
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    double sum = 0.0;
    for (double v : m[r]) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw Error(ErrorKind::kInvalidArgument,
                    fmt::format("confusion row {} has a negative or non-finite entry", r));
      }
      sum += v;
    }
    if (std::abs(sum - 1.0) > tolerance) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("confusion row {} sums to {}, not 1", r, sum));
    }
  }
}

Matrix4 renormalize_rows(const Matrix4& m) {
  Matrix4 out = m;
  for (auto& row : out) {
    double sum = 0.0;
    for (double v : row) sum += v;
    if (sum <= 0.0) {
      throw Error(ErrorKind::kInvalidArgument, "cannot renormalize an all-zero row");
    }
    for (double& v : row) v /= sum;
  }
  return out;
}

Matrix4 degrade_diagonal(const Matrix4& m, std::span<const int> classes, double amount) {
  Matrix4 out = m;
  for (int c : classes) {
    const auto r = GraspClass(c).index();
    const double removed = std::min(amount, out[r][r]);
    out[r][r] -= removed;
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      if (j != r) out[r][j] += removed / (kNumClasses - 1);
    }
  }
  return out;
}

StochasticClassifier::StochasticClassifier(const Matrix4& confusion, std::uint64_t seed)
    : confusion_(confusion), rng_(seed) {
  validate_row_stochastic(confusion_);
}

GraspClass StochasticClassifier::sample(GraspClass true_class) {
  const auto& row = confusion_[true_class.index()];
  const double u = rng_.uniform01();
  double cumulative = 0.0;
  int last_nonzero = 0;
  for (int j = 0; j < kNumClasses; ++j) {
    if (row[j] <= 0.0) continue;
    last_nonzero = j;
    cumulative += row[j];
    if (u < cumulative) return GraspClass(j);
  }
  // Rounding can leave the cumulative sum a hair below 1.
  return GraspClass(last_nonzero);
}

}  // namespace layerkit
