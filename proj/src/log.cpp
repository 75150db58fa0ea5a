#include "ddac/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string_view>

namespace ddac {

namespace {

LogLevel from_env() {
  const char* raw = std::getenv("DDAC_LOG");
  if (raw == nullptr) return LogLevel::Quiet;
  const std::string_view v(raw);
  if (v == "debug") return LogLevel::Debug;
  if (v == "info") return LogLevel::Info;
  return LogLevel::Quiet;
}

std::atomic<int>& level_slot() {
  static std::atomic<int> slot{static_cast<int>(from_env())};
  return slot;
}

std::mutex log_mutex;

}  // namespace

LogLevel log_level() { return static_cast<LogLevel>(level_slot().load()); }

void set_log_level(LogLevel level) { level_slot().store(static_cast<int>(level)); }

void log(LogLevel level, const std::string& line) {
  if (level == LogLevel::Quiet || static_cast<int>(level) > level_slot().load()) return;
  std::lock_guard lock(log_mutex);
  std::cerr << "[ddac] " << line << '\n';
}

}  // namespace ddac
