#pragma once

#include <cstddef>
#include <functional>
#include <string>

namespace hetdr::log {

enum class Level { Debug = 0, Info = 1, Warning = 2, Error = 3, Off = 4 };

using Sink = std::function<void(Level, const std::string&)>;

// Thread-safe. The default sink prints warnings and above to stderr.
void set_level(Level level);
Level level();
void set_sink(Sink sink);
void reset_sink();

void write(Level level, const std::string& message);
inline void debug(const std::string& m) { write(Level::Debug, m); }
inline void info(const std::string& m) { write(Level::Info, m); }
inline void warn(const std::string& m) { write(Level::Warning, m); }

// Number of warnings emitted since the last reset; used by tests.
std::size_t warning_count();
void reset_counters();

}  // namespace hetdr::log
