#pragma once

#include <iosfwd>

namespace rarecog {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

/// Entry point of the `rarecog` command. Diagnostics go to `err`, command
/// output that is not written to a file goes to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rarecog
