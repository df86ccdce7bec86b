#include "tokencast/log.hpp"

#include <atomic>
#include <mutex>

namespace tokencast {

namespace {
std::atomic<int> g_threshold{static_cast<int>(LogLevel::info)};
std::mutex g_mutex;
}  // namespace

LogLevel log_threshold() { return static_cast<LogLevel>(g_threshold.load()); }

void set_log_threshold(LogLevel level) { g_threshold = static_cast<int>(level); }

void log_line(LogLevel level, const std::string& message) {
  static constexpr const char* kNames[] = {"debug", "info", "warn", "error"};
  std::lock_guard lock(g_mutex);
  std::cerr << '[' << kNames[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace tokencast
