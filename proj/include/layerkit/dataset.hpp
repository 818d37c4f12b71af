#pragma once

// Episode-structured tactile dataset: types, JSON-Lines I/O, filtering and
// episode-grouped train/validation splitting.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <ranges>
#include <string>
#include <vector>

namespace layerkit {

inline constexpr std::size_t kFluxDim = 15;   // 5 magnetometers x 3 axes
inline constexpr int kNumClasses = 4;         // 0..3 layers pinched

using Flux = std::array<double, kFluxDim>;

/// Number of cloth layers between the fingertips, capped at 3.
class GraspClass {
 public:
  /// Throws Error(kInvalidArgument) unless 0 <= value <= 3.
  explicit GraspClass(int value);

  int value() const noexcept { return value_; }
  std::size_t index() const noexcept { return static_cast<std::size_t>(value_); }

  friend auto operator<=>(GraspClass, GraspClass) = default;

 private:
  int value_;
};

/// Class for a true layer count; counts above 3 map to class 3.
GraspClass capped_class(int layers);

/// One 15-D flux sample, magnetometer-major: [m0.x, m0.y, m0.z, m1.x, ...].
class SensorReading {
 public:
  /// Throws Error(kInvalidArgument) on any non-finite value.
  explicit SensorReading(const Flux& flux);

  const Flux& flux() const noexcept { return flux_; }
  double operator[](std::size_t i) const noexcept { return flux_[i]; }

  friend bool operator==(const SensorReading&, const SensorReading&) = default;

 private:
  Flux flux_;
};

struct Episode {
  std::string id;
  GraspClass label{0};
  std::vector<SensorReading> readings;
  double approach_offset_mm = 0.0;
  double sample_rate_hz = 350.0;

  friend bool operator==(const Episode&, const Episode&) = default;
};

/// Immutable collection of episodes. Episodes are held by shared pointer so
/// splits and folds share storage with their parent.
class Dataset {
 public:
  Dataset() = default;

  /// Validates every episode (non-empty readings, positive sample rate) and
  /// id uniqueness. Throws Error(kInvalidArgument) on violation.
  Dataset(std::vector<Episode> episodes, std::string provenance);
  Dataset(std::vector<std::shared_ptr<const Episode>> episodes,
          std::string provenance);

  std::size_t size() const noexcept { return episodes_.size(); }
  bool empty() const noexcept { return episodes_.empty(); }
  const Episode& operator[](std::size_t i) const { return *episodes_[i]; }
  const std::shared_ptr<const Episode>& handle(std::size_t i) const {
    return episodes_[i];
  }

  auto episodes() const {
    return episodes_ | std::views::transform(
                           [](const std::shared_ptr<const Episode>& e)
                               -> const Episode& { return *e; });
  }

  const std::string& provenance() const noexcept { return provenance_; }
  std::size_t total_readings() const noexcept { return total_readings_; }
  std::vector<std::string> ids() const;

 private:
  std::vector<std::shared_ptr<const Episode>> episodes_;
  std::string provenance_;
  std::size_t total_readings_ = 0;
};

/// Episode-wise equality; provenance is ignored.
bool same_episodes(const Dataset& a, const Dataset& b);

struct SplitSpec {
  double train_fraction = 0.95;
  std::uint64_t seed = 0;
};

struct Split {
  Dataset train;
  Dataset val;
};

struct LoadOptions {
  /// Accept and ignore unknown keys.
  bool lenient = false;
};

/// Reads one episode per non-blank line. Throws Error(kFileNotFound) or
/// MalformedLineError naming the 1-based line number.
Dataset load_dataset(const std::filesystem::path& path, LoadOptions options = {});

/// Parses JSON-Lines text already in memory; `source` becomes the provenance.
Dataset parse_dataset(const std::string& text, const std::string& source,
                      LoadOptions options = {});

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
std::string serialize_dataset(const Dataset& ds);

/// Episodes satisfying `keep`, order preserved.
Dataset filter_episodes(const Dataset& ds,
                        const std::function<bool(const Episode&)>& keep);

/// Predicate used to drop episodes in which no cloth ended up between the
/// fingers (label 0).
inline bool is_cloth_grasped(const Episode& ep) { return ep.label.value() != 0; }

/// Shuffles episode order with a seeded Fisher-Yates pass and assigns the
/// first round_half_up(fraction * n) episodes to train. When the fraction is
/// below 1 the validation side always keeps at least one episode and the
/// training side at least one.
Split split_by_episode(const Dataset& ds, const SplitSpec& spec);

/// Fold i uses seed derive_seed(seed, i) = seed ^ splitmix64(i).
std::vector<Split> make_cv_folds(const Dataset& ds, std::size_t n_folds,
                                 double train_fraction, std::uint64_t seed);

/// Number of training episodes split_by_episode assigns for n episodes.
std::size_t train_count(std::size_t n, double train_fraction);

}  // namespace layerkit
