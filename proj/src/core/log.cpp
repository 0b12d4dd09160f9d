#include "core/log.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>

namespace mduit::log {

namespace {
std::optional<Level> g_level;
}

Level verbosity() {
  if (!g_level) {
    g_level = Level::kInfo;
    if (const char* env = std::getenv("MDUIT_VERBOSITY")) {
      const int v = std::atoi(env);
      g_level = v <= 0 ? Level::kQuiet : (v == 1 ? Level::kInfo : Level::kDebug);
    }
  }
  return *g_level;
}

void set_verbosity(Level level) { g_level = level; }

void write(Level level, const std::string& message) {
  if (static_cast<int>(level) > static_cast<int>(verbosity())) return;
  std::cerr << "[mduit] " << message << '\n';
}

}  // namespace mduit::log
