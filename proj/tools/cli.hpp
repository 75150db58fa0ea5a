#pragma once

#include <ostream>

namespace ddac::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;
inline constexpr int kDataError = 2;
inline constexpr int kNotConverged = 3;
inline constexpr int kRuntimeError = 4;

/// Parses argv and runs one subcommand. Diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ddac::cli
