#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace damm::cli {

/// Exit codes of the command-line driver.
enum ExitCode : int { kOk = 0, kBadInput = 1, kSolverFailure = 2, kFitFailure = 3 };

/// Runs one subcommand. `argv[0]` is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::vector<std::string> preset_names();

}  // namespace damm::cli
