#pragma once

#include <iosfwd>

namespace geoerasure::app {

/// Exit codes shared by every command.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kBackendFailure = 3,
};

/// Parses the command line and runs one command.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace geoerasure::app
