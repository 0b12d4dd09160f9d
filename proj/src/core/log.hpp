#pragma once

#include <sstream>
#include <string>

namespace mduit::log {

enum class Level { kQuiet = 0, kInfo = 1, kDebug = 2 };

// Read once from MDUIT_VERBOSITY (0, 1 or 2; default 1).
Level verbosity();
void set_verbosity(Level level);

void write(Level level, const std::string& message);

inline void info(const std::string& m) { write(Level::kInfo, m); }
inline void debug(const std::string& m) { write(Level::kDebug, m); }

}  // namespace mduit::log
