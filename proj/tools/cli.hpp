#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace layerkit::cli {

// Exit codes are a stable contract.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitUsage = 2;

/// Runs the command line `args` (args[0] is the program name) and returns the
/// exit code. All console output goes to `out` and `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace layerkit::cli
