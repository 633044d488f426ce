#include "fera/log.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>
#include <set>
#include <string>

namespace fera {
namespace {

std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

bool quiet() {
  static const bool q = std::getenv("FERA_QUIET") != nullptr;
  return q;
}

void emit(std::string_view level, std::string_view message) {
  if (quiet()) return;
  std::lock_guard lock(log_mutex());
  std::cerr << "[fera] " << level << ": " << message << '\n';
}

}  // namespace

void log_warning(std::string_view message) { emit("warning", message); }
void log_info(std::string_view message) { emit("info", message); }

void log_warning_once(std::string_view key, std::string_view message) {
  static std::set<std::string, std::less<>> seen;
  {
    std::lock_guard lock(log_mutex());
    if (!seen.insert(std::string(key)).second) return;
  }
  log_warning(message);
}

}  // namespace fera
