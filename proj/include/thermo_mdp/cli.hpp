#pragma once

// Command-line front end. `run` is the whole program minus argv handling, so tests can
// drive it in-process.

#include <ostream>
#include <string>
#include <vector>

namespace thermo_mdp::cli {

/// Exit codes: 0 success, 2 validation failure, 3 numerical failure, 4 cap exceeded.
enum ExitCode : int { kOk = 0, kInternal = 1, kValidation = 2, kNumerical = 3, kCap = 4 };

/// args excludes the program name. Reports go to `out` (or to files under --out),
/// structured errors to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Shortest text that names x at 17 significant digits, locale independent.
std::string format_real(double x);

}  // namespace thermo_mdp::cli
