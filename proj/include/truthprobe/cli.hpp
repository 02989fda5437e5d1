#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace truthprobe {

/// Exit code for malformed command lines.
inline constexpr int kUsageExitCode = 64;

/// Runs the command line `args` (args[0] is the program name). Returns the
/// process exit code: 0 on success, ErrorKind values for library errors,
/// kUsageExitCode for bad flags.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace truthprobe
