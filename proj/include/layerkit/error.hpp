#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace layerkit {

enum class ErrorKind {
  kFileNotFound,
  kMalformedLine,
  kIo,
  kEmptyDataset,
  kEmptyTrainingSet,
  kInsufficientData,
  kEmptyWindow,
  kNoSupport,
  kCalibrationFailed,
  kMethodNotFound,
  kInvalidArgument,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library. Callers that need to branch on the
// failure (the CLI maps kinds to exit codes) inspect kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class MalformedLineError : public Error {
 public:
  MalformedLineError(std::size_t line, const std::string& cause)
      : Error(ErrorKind::kMalformedLine,
              "line " + std::to_string(line) + ": " + cause),
        line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace layerkit
