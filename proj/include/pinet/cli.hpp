#pragma once

// The `pinet` command line: train, verify, expand, degree.

#include <ostream>
#include <string>
#include <vector>

namespace pinet::cli {

enum ExitCode : int {
  kSuccess = 0,
  /// A verification, expectation or degree check failed, or training diverged.
  kCheckFailed = 1,
  /// Bad arguments or configuration.
  kUsageError = 2,
  /// Unreadable, missing or corrupt input files, or unwritable outputs.
  kIoError = 3,
};

/// Runs the CLI on `args` (args[0] is the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pinet::cli
