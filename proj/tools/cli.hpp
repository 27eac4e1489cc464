#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace delayh2::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kError = 1;
inline constexpr int kNotConverged = 2;

/// Runs the command line `args` (without the program name). Output that
/// would go to stdout/stderr goes to `out`/`err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace delayh2::cli
