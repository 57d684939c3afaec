#pragma once

#include <iostream>
#include <mutex>
#include <string>

namespace elink::log {

enum class Level { debug = 0, info = 1, warn = 2, error = 3, quiet = 4 };

inline Level& threshold() {
  static Level level = Level::info;
  return level;
}

inline void emit(Level level, const std::string& msg) {
  static std::mutex mu;
  if (level < threshold()) return;
  static constexpr const char* names[] = {"debug", "info", "warn", "error"};
  std::lock_guard lock(mu);
  std::clog << "[elink " << names[static_cast<int>(level)] << "] " << msg << '\n';
}

inline void info(const std::string& msg) { emit(Level::info, msg); }
inline void warn(const std::string& msg) { emit(Level::warn, msg); }

}  // namespace elink::log
