#pragma once

#include <iostream>
#include <sstream>
#include <string>

namespace tokencast {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

LogLevel log_threshold();
void set_log_threshold(LogLevel level);
void log_line(LogLevel level, const std::string& message);

template <typename... Args>
void log(LogLevel level, const Args&... args) {
  if (level < log_threshold()) return;
  std::ostringstream os;
  (os << ... << args);
  log_line(level, os.str());
}

template <typename... Args>
void log_info(const Args&... args) {
  log(LogLevel::info, args...);
}

template <typename... Args>
void log_warn(const Args&... args) {
  log(LogLevel::warn, args...);
}

}  // namespace tokencast
