#include "fedmogp/logging.hpp"

#include <cstdlib>
#include <cstring>

namespace fedmogp::log {

static Level parse_level_env() {
  const char* raw = std::getenv("FEDMOGP_LOG");
  if (raw == nullptr) return Level::kWarn;
  if (std::strcmp(raw, "error") == 0) return Level::kError;
  if (std::strcmp(raw, "warn") == 0) return Level::kWarn;
  if (std::strcmp(raw, "info") == 0) return Level::kInfo;
  if (std::strcmp(raw, "debug") == 0) return Level::kDebug;
  return Level::kWarn;
}

Level verbosity() {
  static const Level level = parse_level_env();
  return level;
}

bool enabled(Level level) {
  return static_cast<int>(level) <= static_cast<int>(verbosity());
}

void write(Level level, const std::string& message) {
  if (!enabled(level)) return;
  static const char* names[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[%s] %s\n", names[static_cast<int>(level)], message.c_str());
}

}  // namespace fedmogp::log
