#include "simtrack/log.hpp"

#include <cstdio>
#include <cstdlib>
#include <mutex>

namespace simtrack {

namespace {

LogLevel parse_env() {
    const char* v = std::getenv("SIMTRACK_LOG");
    if (!v) return LogLevel::Error;
    std::string s(v);
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    return LogLevel::Error;
}

LogLevel g_level = parse_env();
std::mutex g_mutex;

}  // namespace

LogLevel log_level() { return g_level; }

void set_log_level(LogLevel lvl) { g_level = lvl; }

void log_write(LogLevel lvl, const std::string& msg) {
    static const char* names[] = {"error", "info", "debug"};
    std::lock_guard<std::mutex> lock(g_mutex);
    std::fprintf(stderr, "[simtrack:%s] %s\n", names[static_cast<int>(lvl)], msg.c_str());
}

}  // namespace simtrack
