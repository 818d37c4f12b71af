#pragma once

#include <cstdint>
#include <random>

namespace layerkit {

/// SplitMix64 finalizer. Used to decorrelate derived seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the index-th child stream of `seed`: seed XOR splitmix64(index).
/// This derivation is part of the file-format contract (fold and trial seeds
/// are recorded in outputs) and must not change.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return seed ^ splitmix64(index);
}

// Deterministic random stream. The engine is std::mt19937_64, whose output is
// fixed by the standard; the distributions are implemented here because the
// standard library ones are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform01();

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal via Box-Muller; caches the second variate.
  double normal();

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace layerkit
