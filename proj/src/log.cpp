#include "oewt/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>

namespace oewt {

namespace {

LogLevel from_env() {
  const char* raw = std::getenv("OEWT_LOG");
  if (!raw) return LogLevel::info;
  const std::string v(raw);
  if (v == "quiet" || v == "0") return LogLevel::quiet;
  if (v == "debug" || v == "2") return LogLevel::debug;
  return LogLevel::info;
}

std::atomic<LogLevel>& level_slot() {
  static std::atomic<LogLevel> level{from_env()};
  return level;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

void emit(const std::string& message) {
  std::lock_guard<std::mutex> lock(sink_mutex());
  std::cerr << "[oewt] " << message << "\n";
}

}  // namespace

LogLevel log_level() { return level_slot().load(std::memory_order_relaxed); }

void set_log_level(LogLevel level) {
  level_slot().store(level, std::memory_order_relaxed);
}

void log_info(const std::string& message) {
  if (log_level() >= LogLevel::info) emit(message);
}

void log_debug(const std::string& message) {
  if (log_level() >= LogLevel::debug) emit(message);
}

}  // namespace oewt
