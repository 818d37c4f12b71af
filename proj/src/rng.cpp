#include "layerkit/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "layerkit/error.hpp"

namespace layerkit {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFileNotFound: return "FileNotFound";
    case ErrorKind::kMalformedLine: return "MalformedLine";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kEmptyDataset: return "EmptyDataset";
    case ErrorKind::kEmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::kInsufficientData: return "InsufficientData";
    case ErrorKind::kEmptyWindow: return "EmptyWindow";
    case ErrorKind::kNoSupport: return "NoSupport";
    case ErrorKind::kCalibrationFailed: return "CalibrationFailed";
    case ErrorKind::kMethodNotFound: return "MethodNotFound";
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

double Rng::uniform01() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw Error(ErrorKind::kInvalidArgument, "uniform_index: n == 0");
  // Rejection sampling on the top of the range removes modulo bias.
  const std::uint64_t limit =
      std::numeric_limits<std::uint64_t>::max() -
      std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform01();
  } while (u1 <= 0.0);
  const double u2 = uniform01();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

}  // namespace layerkit
