#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dentalx::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigFailure = 2, kDataFailure = 3, kNumericalFailure = 4 };

// Entry point shared by the executable and the tests; `args` excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dentalx::cli
