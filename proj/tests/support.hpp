#pragma once

// Fixtures and brute-force reference implementations shared by the tests.
// The oracles are written independently of the library code paths they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "layerkit/classify.hpp"
#include "layerkit/dataset.hpp"
#include "layerkit/eval.hpp"
#include "layerkit/policy.hpp"
#include "layerkit/rng.hpp"

namespace layerkit::test {

inline Flux filled(double v) {
  Flux f;
  f.fill(v);
  return f;
}

inline Flux random_flux(Rng& rng, double scale = 1.0) {
  Flux f;
  for (double& v : f) v = scale * rng.normal();
  return f;
}

inline Episode make_episode(const std::string& id, int label, std::size_t n_readings,
                            double value = 0.0) {
  Episode ep;
  ep.id = id;
  ep.label = GraspClass(label);
  for (std::size_t i = 0; i < n_readings; ++i) {
    ep.readings.emplace_back(filled(value + static_cast<double>(i)));
  }
  return ep;
}

/// n episodes with labels cycling 0..3 and random readings.
inline Dataset random_dataset(std::size_t n, Rng& rng, std::size_t readings = 5) {
  std::vector<Episode> eps;
  for (std::size_t e = 0; e < n; ++e) {
    Episode ep;
    ep.id = "e" + std::to_string(e);
    ep.label = GraspClass(static_cast<int>(e % kNumClasses));
    for (std::size_t r = 0; r < readings; ++r) ep.readings.emplace_back(random_flux(rng));
    eps.push_back(std::move(ep));
  }
  return Dataset(std::move(eps), "test");
}

/// Four tight clusters far apart, one episode per class and `per_class`
/// readings each.
inline Dataset separable_dataset(std::size_t episodes_per_class, std::size_t per_class,
                                 std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Episode> eps;
  for (std::size_t e = 0; e < episodes_per_class; ++e) {
    for (int c = 0; c < kNumClasses; ++c) {
      Episode ep;
      ep.id = "c" + std::to_string(c) + "_" + std::to_string(e);
      ep.label = GraspClass(c);
      for (std::size_t r = 0; r < per_class; ++r) {
        Flux f = random_flux(rng, 0.1);
        f[static_cast<std::size_t>(c)] += 100.0;
        ep.readings.emplace_back(f);
      }
      eps.push_back(std::move(ep));
    }
  }
  return Dataset(std::move(eps), "separable");
}

/// Sorts every training point by (distance, index), takes the first k and
/// votes: most votes, then smaller summed distance, then smaller class.
inline GraspClass knn_oracle(const std::vector<Flux>& points, const std::vector<int>& labels,
                             int k, const Flux& query) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < kFluxDim; ++j) {
      d2 += (points[i][j] - query[j]) * (points[i][j] - query[j]);
    }
    all.emplace_back(d2, i);
  }
  std::sort(all.begin(), all.end());
  std::array<int, kNumClasses> votes{};
  std::array<double, kNumClasses> dist{};
  for (int n = 0; n < k; ++n) {
    const int c = labels[all[static_cast<std::size_t>(n)].second];
    votes[static_cast<std::size_t>(c)] += 1;
    dist[static_cast<std::size_t>(c)] += std::sqrt(all[static_cast<std::size_t>(n)].first);
  }
  int best = 0;
  for (int c = 1; c < kNumClasses; ++c) {
    const auto i = static_cast<std::size_t>(c), b = static_cast<std::size_t>(best);
    if (votes[i] > votes[b] || (votes[i] == votes[b] && dist[i] < dist[b])) best = c;
  }
  return GraspClass(best);
}

/// Smallest gap between any two squared distances from `query`.
inline double min_distance_gap(const std::vector<Flux>& points, const Flux& query) {
  std::vector<double> d;
  for (const Flux& p : points) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < kFluxDim; ++j) d2 += (p[j] - query[j]) * (p[j] - query[j]);
    d.push_back(d2);
  }
  std::sort(d.begin(), d.end());
  double gap = 1e300;
  for (std::size_t i = 1; i < d.size(); ++i) gap = std::min(gap, d[i] - d[i - 1]);
  return gap;
}

inline std::array<int, kNumClasses> count_votes(const std::vector<GraspClass>& w) {
  std::array<int, kNumClasses> c{};
  for (GraspClass g : w) c[g.index()] += 1;
  return c;
}

/// A deterministic stack (zero slip) with the target band inside the policy
/// bounds and at least one step wide, so feedback with a perfect classifier
/// must converge.
struct ConvergenceCase {
  PolicyConfig cfg;
  TrialEnv env;
  int attempt_limit = 0;  // 1 + ceil(range / step)
};

inline ConvergenceCase random_convergence_case(Rng& rng) {
  StackConfig sc;
  sc.n_layers = 4;
  sc.layer_thickness_mm = rng.uniform(2.0, 6.0);
  sc.stack_variation_mm = rng.uniform(0.0, 1.5);
  sc.top_edge_mm = rng.uniform(-5.0, 5.0);
  sc.start_height_mm = rng.uniform(-5.0, 5.0);
  const ClothStackModel stack(sc);

  PolicyConfig cfg;
  cfg.kind = PolicyKind::kFeedback;
  cfg.target_layers = 1 + static_cast<int>(rng.uniform_index(2));
  cfg.step_mm = rng.uniform(1.0, std::min(3.0, sc.layer_thickness_mm));
  const double centre = stack.band_center_d_vert(cfg.target_layers);
  // The band is centre +- thickness/2 shifted by at most the variation; keep
  // it whole inside the bounds.
  const double half = sc.layer_thickness_mm / 2.0 + sc.stack_variation_mm;
  cfg.bounds = {centre - half - rng.uniform(0.0, 8.0), centre + half + rng.uniform(0.0, 8.0)};
  cfg.d_vert_init_mm = rng.uniform(cfg.bounds.low, cfg.bounds.high);
  cfg.window = 20;
  const int limit = 1 + static_cast<int>(std::ceil((cfg.bounds.high - cfg.bounds.low) / cfg.step_mm));
  cfg.max_attempts = limit;

  SignalParams sp;
  sp.seed = rng.next_u64();
  return {cfg, TrialEnv{stack, TactileSignalModel::from_params(sp), 0.0}, limit};
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("layerkit_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace layerkit::test
