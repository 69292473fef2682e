#pragma once

#include <iosfwd>

namespace perspqp {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,          // success; for solve and bnb, the instance was solved
  kExitError = 1,       // I/O or other runtime failure
  kExitUsage = 2,       // bad flags or arguments
  kExitInfeasible = 3,
  kExitLimit = 4,       // iteration, time or node limit, or t driven to its floor
};

/// Subcommands gen, solve, bnb and bench. Normal output goes to out,
/// diagnostics and usage errors to err.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace perspqp
