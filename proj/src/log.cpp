#include "seqmasks/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace seqmasks::log {
namespace {

std::atomic<Level> g_level{Level::kInfo};
std::mutex g_mutex;

const char* tag(Level level) {
  switch (level) {
    case Level::kDebug: return "D";
    case Level::kInfo: return "I";
    case Level::kWarning: return "W";
    case Level::kError: return "E";
    default: return "?";
  }
}

}  // namespace

void set_level(Level level) { g_level.store(level); }
Level level() { return g_level.load(); }

void write(Level lvl, std::string_view message) {
  if (lvl < g_level.load()) return;
  std::lock_guard<std::mutex> lock(g_mutex);
  std::clog << "[seqmasks " << tag(lvl) << "] " << message << '\n';
}

}  // namespace seqmasks::log
