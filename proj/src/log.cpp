#include "tokfix/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace tokfix {

namespace {
std::atomic<int> g_level{static_cast<int>(LogLevel::Warn)};
std::mutex g_mu;

void emit(const char* tag, const std::string& message) {
    std::lock_guard lock(g_mu);
    std::cerr << "[tokfix] " << tag << message << '\n';
}
}  // namespace

void set_log_level(LogLevel level) { g_level = static_cast<int>(level); }
LogLevel log_level() { return static_cast<LogLevel>(g_level.load()); }

void log_info(const std::string& message) {
    if (g_level >= static_cast<int>(LogLevel::Info)) emit("", message);
}

void log_warn(const std::string& message) {
    if (g_level >= static_cast<int>(LogLevel::Warn)) emit("warning: ", message);
}

}  // namespace tokfix
