#pragma once

// Minimal stderr logger. Verbosity comes from the CPGLOCO_LOG environment
// variable: error, warn (default), info, debug.

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string_view>

namespace cpgloco::log {

enum class Level { error = 0, warn = 1, info = 2, debug = 3 };

inline Level level_from_env() {
    const char* env = std::getenv("CPGLOCO_LOG");
    if (!env) return Level::warn;
    const std::string_view v(env);
    if (v == "error") return Level::error;
    if (v == "info") return Level::info;
    if (v == "debug") return Level::debug;
    return Level::warn;
}

inline Level& threshold() {
    static Level lvl = level_from_env();
    return lvl;
}

inline bool enabled(Level lvl) { return lvl <= threshold(); }

template <typename... Args>
void write(Level lvl, const Args&... args) {
    if (!enabled(lvl)) return;
    static std::mutex mu;
    static constexpr const char* tags[] = {"error", "warn", "info", "debug"};
    std::lock_guard lock(mu);
    std::cerr << "[" << tags[static_cast<int>(lvl)] << "] ";
    (std::cerr << ... << args) << '\n';
}

template <typename... Args> void error(const Args&... a) { write(Level::error, a...); }
template <typename... Args> void warn(const Args&... a) { write(Level::warn, a...); }
template <typename... Args> void info(const Args&... a) { write(Level::info, a...); }
template <typename... Args> void debug(const Args&... a) { write(Level::debug, a...); }

}  // namespace cpgloco::log
