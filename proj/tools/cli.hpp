#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace qhmm::cli {

/// Process exit codes.
enum ExitCode : int {
  ok = 0,
  failure = 1,
  invalid_input = 2,
  precondition = 3,
  infeasible = 4,
};

/// Runs the command line `args` (without the program name). Reports go to
/// `out` unless --out names a file; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qhmm::cli
