#include "layerkit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>
#include <json.hpp>

#include "layerkit/error.hpp"
#include "layerkit/rng.hpp"

namespace layerkit {

using ordered_json = nlohmann::ordered_json;

GraspClass::GraspClass(int value) : value_(value) {
  if (value < 0 || value >= kNumClasses) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("grasp class must be in 0..3, got {}", value));
  }
}

GraspClass capped_class(int layers) {
  if (layers < 0) {
    throw Error(ErrorKind::kInvalidArgument, "negative layer count");
  }
  return GraspClass(std::min(layers, kNumClasses - 1));
}

SensorReading::SensorReading(const Flux& flux) : flux_(flux) {
  for (std::size_t i = 0; i < kFluxDim; ++i) {
    if (!std::isfinite(flux[i])) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("non-finite flux value at index {}", i));
    }
  }
}

namespace {

void validate_episode(const Episode& ep) {
  if (ep.readings.empty()) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("episode '{}' has no readings", ep.id));
  }
  if (!(ep.sample_rate_hz > 0.0) || !std::isfinite(ep.sample_rate_hz)) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("episode '{}' has non-positive sample rate", ep.id));
  }
  if (!std::isfinite(ep.approach_offset_mm)) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("episode '{}' has non-finite approach offset", ep.id));
  }
}

std::vector<std::shared_ptr<const Episode>> to_handles(std::vector<Episode> episodes) {
  std::vector<std::shared_ptr<const Episode>> handles;
  handles.reserve(episodes.size());
  for (Episode& ep : episodes) {
    handles.push_back(std::make_shared<const Episode>(std::move(ep)));
  }
  return handles;
}

}  // namespace

Dataset::Dataset(std::vector<Episode> episodes, std::string provenance)
    : Dataset(to_handles(std::move(episodes)), std::move(provenance)) {}

Dataset::Dataset(std::vector<std::shared_ptr<const Episode>> episodes,
                 std::string provenance)
    : episodes_(std::move(episodes)), provenance_(std::move(provenance)) {
  std::unordered_set<std::string> seen;
  seen.reserve(episodes_.size());
  for (const auto& ep : episodes_) {
    if (!ep) throw Error(ErrorKind::kInvalidArgument, "null episode");
    validate_episode(*ep);
    if (!seen.insert(ep->id).second) {
      throw Error(ErrorKind::kInvalidArgument,
                  fmt::format("duplicate episode id '{}'", ep->id));
    }
    total_readings_ += ep->readings.size();
  }
}

std::vector<std::string> Dataset::ids() const {
  std::vector<std::string> out;
  out.reserve(episodes_.size());
  for (const auto& ep : episodes_) out.push_back(ep->id);
  return out;
}

bool same_episodes(const Dataset& a, const Dataset& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i] == b[i])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// JSON Lines

namespace {

constexpr std::array<const char*, 5> kEpisodeKeys = {
    "id", "label", "approach_offset_mm", "sample_rate_hz", "readings"};

double require_number(const ordered_json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw std::invalid_argument(fmt::format("missing key '{}'", key));
  if (!it->is_number()) throw std::invalid_argument(fmt::format("'{}' is not a number", key));
  return it->get<double>();
}

Episode parse_episode(const ordered_json& obj, const LoadOptions& options) {
  if (!obj.is_object()) throw std::invalid_argument("line is not a JSON object");
  if (!options.lenient) {
    for (const auto& [key, value] : obj.items()) {
      if (std::find_if(kEpisodeKeys.begin(), kEpisodeKeys.end(),
                       [&](const char* k) { return key == k; }) ==
          kEpisodeKeys.end()) {
        throw std::invalid_argument(fmt::format("unknown key '{}'", key));
      }
    }
  }

  Episode ep;
  auto id = obj.find("id");
  if (id == obj.end() || !id->is_string()) {
    throw std::invalid_argument("'id' missing or not a string");
  }
  ep.id = id->get<std::string>();

  auto label = obj.find("label");
  if (label == obj.end() || !label->is_number_integer()) {
    throw std::invalid_argument("'label' missing or not an integer");
  }
  const auto raw_label = label->get<std::int64_t>();
  if (raw_label < 0 || raw_label >= kNumClasses) {
    throw std::invalid_argument(fmt::format("bad label {}", raw_label));
  }
  ep.label = GraspClass(static_cast<int>(raw_label));

  ep.approach_offset_mm = require_number(obj, "approach_offset_mm");
  ep.sample_rate_hz = require_number(obj, "sample_rate_hz");
  if (!std::isfinite(ep.approach_offset_mm)) {
    throw std::invalid_argument("non-finite approach_offset_mm");
  }
  if (!(ep.sample_rate_hz > 0.0) || !std::isfinite(ep.sample_rate_hz)) {
    throw std::invalid_argument("sample_rate_hz must be positive");
  }

  auto readings = obj.find("readings");
  if (readings == obj.end() || !readings->is_array()) {
    throw std::invalid_argument("'readings' missing or not an array");
  }
  if (readings->empty()) throw std::invalid_argument("'readings' is empty");
  ep.readings.reserve(readings->size());
  std::size_t r = 0;
  for (const auto& row : *readings) {
    if (!row.is_array() || row.size() != kFluxDim) {
      throw std::invalid_argument(
          fmt::format("reading {} does not have {} values", r, kFluxDim));
    }
    Flux flux{};
    for (std::size_t i = 0; i < kFluxDim; ++i) {
      if (!row[i].is_number()) {
        throw std::invalid_argument(fmt::format("reading {} value {} is not a number", r, i));
      }
      flux[i] = row[i].get<double>();
      if (!std::isfinite(flux[i])) {
        throw std::invalid_argument(fmt::format("reading {} value {} is not finite", r, i));
      }
    }
    ep.readings.emplace_back(flux);
    ++r;
  }
  return ep;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

}  // namespace

Dataset parse_dataset(const std::string& text, const std::string& source,
                      LoadOptions options) {
  std::vector<Episode> episodes;
  std::unordered_set<std::string> ids;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    Episode ep;
    try {
      ep = parse_episode(ordered_json::parse(line), options);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedLineError(line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw MalformedLineError(line_no, e.what());
    } catch (const Error& e) {
      throw MalformedLineError(line_no, e.what());
    }
    if (!ids.insert(ep.id).second) {
      throw MalformedLineError(line_no, fmt::format("duplicate id '{}'", ep.id));
    }
    episodes.push_back(std::move(ep));
  }
  return Dataset(std::move(episodes), source);
}

Dataset load_dataset(const std::filesystem::path& path, LoadOptions options) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorKind::kFileNotFound,
                fmt::format("dataset file not found: {}", path.string()));
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::kIo, fmt::format("cannot open {}", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str(), path.string(), options);
}

std::string serialize_dataset(const Dataset& ds) {
  std::string out;
  for (const Episode& ep : ds.episodes()) {
    ordered_json obj;
    obj["id"] = ep.id;
    obj["label"] = ep.label.value();
    obj["approach_offset_mm"] = ep.approach_offset_mm;
    obj["sample_rate_hz"] = ep.sample_rate_hz;
    ordered_json readings = ordered_json::array();
    for (const SensorReading& r : ep.readings) {
      readings.push_back(r.flux());
    }
    obj["readings"] = std::move(readings);
    // nlohmann prints doubles with the shortest round-trip representation.
    out += obj.dump();
    out += '\n';
  }
  return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, fmt::format("cannot write {}", path.string()));
  out << serialize_dataset(ds);
  out.flush();
  if (!out) throw Error(ErrorKind::kIo, fmt::format("write failed: {}", path.string()));
}

// ---------------------------------------------------------------------------
// Filtering and splitting

Dataset filter_episodes(const Dataset& ds,
                        const std::function<bool(const Episode&)>& keep) {
  std::vector<std::shared_ptr<const Episode>> kept;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (keep(ds[i])) kept.push_back(ds.handle(i));
  }
  return Dataset(std::move(kept), ds.provenance());
}

std::size_t train_count(std::size_t n, double train_fraction) {
  auto count = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(n) + 0.5));
  count = std::min(count, n);
  if (train_fraction < 1.0) {
    if (count >= n) count = n - 1;
    if (count == 0) count = 1;
  }
  return count;
}

Split split_by_episode(const Dataset& ds, const SplitSpec& spec) {
  if (!(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0)) {
    throw Error(ErrorKind::kInvalidArgument,
                fmt::format("train_fraction must be in (0, 1], got {}",
                            spec.train_fraction));
  }
  const std::size_t n = ds.size();
  if (n == 0) throw Error(ErrorKind::kEmptyDataset, "cannot split an empty dataset");
  if (spec.train_fraction < 1.0 && n < 2) {
    throw Error(ErrorKind::kInsufficientData,
                "need at least 2 episodes for a train/validation split");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(spec.seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i + 1));
    std::swap(order[i], order[j]);
  }

  const std::size_t n_train = train_count(n, spec.train_fraction);
  std::vector<std::shared_ptr<const Episode>> train, val;
  train.reserve(n_train);
  val.reserve(n - n_train);
  for (std::size_t i = 0; i < n; ++i) {
    (i < n_train ? train : val).push_back(ds.handle(order[i]));
  }
  return Split{Dataset(std::move(train), ds.provenance()),
               Dataset(std::move(val), ds.provenance())};
}

std::vector<Split> make_cv_folds(const Dataset& ds, std::size_t n_folds,
                                 double train_fraction, std::uint64_t seed) {
  if (n_folds == 0) throw Error(ErrorKind::kInvalidArgument, "n_folds must be >= 1");
  if (ds.empty()) throw Error(ErrorKind::kEmptyDataset, "cannot fold an empty dataset");
  std::vector<Split> folds;
  folds.reserve(n_folds);
  for (std::size_t i = 0; i < n_folds; ++i) {
    folds.push_back(split_by_episode(ds, {train_fraction, derive_seed(seed, i)}));
  }
  return folds;
}

}  // namespace layerkit
