#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace fbflow {

enum class LogLevel { quiet = 0, warning = 1, info = 2 };

namespace detail {
inline std::atomic<int>& log_level_storage() {
    static std::atomic<int> level{static_cast<int>(LogLevel::warning)};
    return level;
}
inline std::mutex& log_mutex() {
    static std::mutex m;
    return m;
}
} // namespace detail

inline void set_log_level(LogLevel level) {
    detail::log_level_storage().store(static_cast<int>(level));
}

inline LogLevel log_level() { return static_cast<LogLevel>(detail::log_level_storage().load()); }

inline void log_warning(std::string_view msg) {
    if (log_level() < LogLevel::warning) return;
    std::lock_guard lock(detail::log_mutex());
    std::clog << "warning: " << msg << '\n';
}

inline void log_info(std::string_view msg) {
    if (log_level() < LogLevel::info) return;
    std::lock_guard lock(detail::log_mutex());
    std::clog << msg << '\n';
}

} // namespace fbflow
