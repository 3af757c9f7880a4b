#pragma once

#include <string_view>

namespace afec::log {

enum class Level { quiet = 0, info = 1, debug = 2 };

/// Current level. Initialised from AFEC_LAB_LOG (quiet|info|debug), default info.
Level level();
void set_level(Level l);
Level parse_level(std::string_view s);

/// Writes one line to stderr if `l` is enabled. Thread-safe.
void write(Level l, std::string_view line);

inline void info(std::string_view line) { write(Level::info, line); }
inline void debug(std::string_view line) { write(Level::debug, line); }

}  // namespace afec::log
