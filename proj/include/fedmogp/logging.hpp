#pragma once

#include <cstdio>
#include <string>

namespace fedmogp::log {

enum class Level { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

// Active verbosity, taken from the FEDMOGP_LOG environment variable
// (error|warn|info|debug). Defaults to warn.
Level verbosity();

bool enabled(Level level);

void write(Level level, const std::string& message);

inline void error(const std::string& m) { write(Level::kError, m); }
inline void warn(const std::string& m) { write(Level::kWarn, m); }
inline void info(const std::string& m) { write(Level::kInfo, m); }
inline void debug(const std::string& m) { write(Level::kDebug, m); }

}  // namespace fedmogp::log
