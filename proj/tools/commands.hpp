#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hdlogit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitRegion = 2;
inline constexpr int kExitConvergence = 3;
inline constexpr int kExitSeparation = 4;
inline constexpr int kExitProbe = 5;
inline constexpr int kExitUsage = 64;

/// Runs one command line; JSON goes to `out` (or --output), the human
/// summary to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace hdlogit::cli
