#include "afec/log.hpp"

#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>

#include "afec/errors.hpp"

namespace afec::log {

namespace {

Level from_env() {
  const char* v = std::getenv("AFEC_LAB_LOG");
  if (v == nullptr || *v == '\0') return Level::info;
  try {
    return parse_level(v);
  } catch (const ConfigError&) {
    return Level::info;
  }
}

std::atomic<int>& current() {
  static std::atomic<int> lvl{static_cast<int>(from_env())};
  return lvl;
}

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

Level parse_level(std::string_view s) {
  if (s == "quiet") return Level::quiet;
  if (s == "info") return Level::info;
  if (s == "debug") return Level::debug;
  throw ConfigError("AFEC_LAB_LOG must be quiet, info or debug");
}

Level level() { return static_cast<Level>(current().load()); }

void set_level(Level l) { current().store(static_cast<int>(l)); }

void write(Level l, std::string_view line) {
  if (l == Level::quiet || static_cast<int>(l) > current().load()) return;
  std::lock_guard lock(sink_mutex());
  std::cerr << line << '\n';
}

}  // namespace afec::log
