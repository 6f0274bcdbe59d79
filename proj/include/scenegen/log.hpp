#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace scenegen {

enum class LogLevel { debug, info, warn, error };

// Process-wide log sink. Tests swap it to capture output.
class Log {
 public:
  using Sink = std::function<void(LogLevel, std::string_view)>;

  static Sink set_sink(Sink sink) {
    std::lock_guard lock(mutex());
    Sink old = std::move(sink_ref());
    sink_ref() = std::move(sink);
    return old;
  }

  static void set_level(LogLevel lvl) { level_ref() = lvl; }

  static void write(LogLevel lvl, std::string_view msg) {
    if (lvl < level_ref()) return;
    std::lock_guard lock(mutex());
    if (sink_ref()) sink_ref()(lvl, msg);
  }

 private:
  static std::mutex& mutex() {
    static std::mutex m;
    return m;
  }
  static Sink& sink_ref() {
    static Sink s = [](LogLevel lvl, std::string_view msg) {
      static constexpr const char* tags[] = {"debug", "info", "warn", "error"};
      std::clog << "[" << tags[static_cast<int>(lvl)] << "] " << msg << '\n';
    };
    return s;
  }
  static LogLevel& level_ref() {
    static LogLevel l = LogLevel::warn;
    return l;
  }
};

inline void log_debug(std::string_view m) { Log::write(LogLevel::debug, m); }
inline void log_info(std::string_view m) { Log::write(LogLevel::info, m); }
inline void log_warn(std::string_view m) { Log::write(LogLevel::warn, m); }

}  // namespace scenegen
