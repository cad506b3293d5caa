#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace spnet {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitGradcheck = 4;

/// Runs the command-line interface on `args` (without the program name) and
/// returns the process exit code. Reports go to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spnet
