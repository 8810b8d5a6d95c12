#pragma once

#include <string>
#include <vector>

namespace strongstab {

/// Command-line front end. Exit codes: 0 success / stable / feasible,
/// 1 analysis ran but the verdict is unstable or infeasible, 2 input error.
int run_cli(const std::vector<std::string>& args);

}  // namespace strongstab
