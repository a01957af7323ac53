#pragma once

#include <ostream>

namespace ccmtrack::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kExitPass = 0,
  kExitFail = 1,
  kExitUsage = 2,
  kExitNumerical = 3,
};

/// Parses arguments and runs one subcommand (certify, synthesize, geodesic,
/// simulate). Reports go to `out`, diagnostics to `err`.
int RunCli(int argc, const char* const* argv, std::ostream& out,
           std::ostream& err);

}  // namespace ccmtrack::cli
