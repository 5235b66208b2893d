#include "fusion/common.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace fusion {

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("FUSION_LOG");
    if (env == nullptr) return LogLevel::kError;
    if (std::strcmp(env, "debug") == 0) return LogLevel::kDebug;
    if (std::strcmp(env, "info") == 0) return LogLevel::kInfo;
    return LogLevel::kError;
  }();
  return level;
}

void log_message(LogLevel level, const std::string& msg) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  const char* tag = level == LogLevel::kError  ? "error"
                    : level == LogLevel::kInfo ? "info"
                                               : "debug";
  std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}

}  // namespace fusion
