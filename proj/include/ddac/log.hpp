#pragma once

#include <string>

namespace ddac {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

/// Read once from DDAC_LOG (quiet | info | debug); defaults to quiet.
LogLevel log_level();
void set_log_level(LogLevel level);
/// Writes one line to stderr when `level` is enabled.
void log(LogLevel level, const std::string& line);

}  // namespace ddac
