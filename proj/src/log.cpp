#include "vqr/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <string>

namespace vqr {

namespace {
std::atomic<LogLevel> g_level{LogLevel::Info};
std::mutex g_mutex;

const char* tag(LogLevel level) {
  switch (level) {
    case LogLevel::Debug: return "debug";
    case LogLevel::Info: return "info";
    case LogLevel::Warn: return "warn";
    case LogLevel::Error: return "error";
    case LogLevel::Off: break;
  }
  return "";
}
}  // namespace

void set_log_level(LogLevel level) noexcept { g_level = level; }
LogLevel log_level() noexcept { return g_level; }

void log(LogLevel level, std::string_view message) {
  if (level < g_level.load() || level == LogLevel::Off) return;
  std::string line = std::string("[vqr ") + tag(level) + "] ";
  line.append(message);
  line.push_back('\n');
  std::lock_guard lock(g_mutex);
  std::cerr << line;
}

}  // namespace vqr
