#pragma once

#include <string>

namespace tokfix {

enum class LogLevel { Quiet = 0, Warn = 1, Info = 2 };

/// Progress logging goes to standard error. Default level is Warn.
void set_log_level(LogLevel level);
LogLevel log_level();

void log_info(const std::string& message);
void log_warn(const std::string& message);

}  // namespace tokfix
