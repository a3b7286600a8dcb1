#pragma once

#include <string_view>

namespace vqr {

enum class LogLevel { Debug, Info, Warn, Error, Off };

void set_log_level(LogLevel level) noexcept;
LogLevel log_level() noexcept;

// Thread-safe line-at-a-time logging to stderr.
void log(LogLevel level, std::string_view message);

inline void log_info(std::string_view m) { log(LogLevel::Info, m); }
inline void log_warn(std::string_view m) { log(LogLevel::Warn, m); }

}  // namespace vqr
