#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace magchain::cli {

enum ExitCode : int {
  kOk = 0,
  kInputError = 2,
  kPartialSweep = 3,
  kSolverFailure = 4,
};

// Environment variable naming the directory searched for relative config paths
// (and for default.json when --config is omitted).
inline constexpr const char* kConfigDirEnv = "MAGCHAIN_CONFIG_DIR";

// Runs the command line in-process. Errors are written to `err` as one JSON object.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace magchain::cli
