// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace ief::cli {

/// Exit codes, one per failure category.
enum Exit : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,          // unknown flag or malformed arguments
  kMissingPath = 3,    // an input file or directory does not exist
  kContradiction = 4,  // options that cannot be combined
  kInvalid = 5,        // structural, validation, initialization or usage errors
  kIo = 6,             // unreadable, truncated, corrupt or wrong-version files
  kDivergence = 7,
  kInference = 8,
  kCheckFailed = 9,
};

/// Runs one command line (args exclude the program name).
int run(const std::vector<std::string>& args);

}  // namespace ief::cli
