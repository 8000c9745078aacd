#pragma once

#include <sstream>
#include <string>

namespace simtrack {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

// Global log level, initialized once from the SIMTRACK_LOG environment
// variable (error|info|debug, default error). Messages go to stderr.
LogLevel log_level();
void set_log_level(LogLevel lvl);
void log_write(LogLevel lvl, const std::string& msg);

}  // namespace simtrack

#define SIMTRACK_LOG(lvl, expr)                                   \
    do {                                                          \
        if (static_cast<int>(lvl) <= static_cast<int>(simtrack::log_level())) { \
            std::ostringstream oss__;                             \
            oss__ << expr;                                        \
            simtrack::log_write(lvl, oss__.str());                \
        }                                                         \
    } while (0)

#define LOG_INFO(expr) SIMTRACK_LOG(simtrack::LogLevel::Info, expr)
#define LOG_DEBUG(expr) SIMTRACK_LOG(simtrack::LogLevel::Debug, expr)
#define LOG_ERROR(expr) SIMTRACK_LOG(simtrack::LogLevel::Error, expr)
