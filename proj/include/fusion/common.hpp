#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fusion {

// Error taxonomy. Everything thrown by the library derives from Error so
// callers (CLI, bindings) can catch one type at the boundary.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or layout mismatch (wrong vector length, bad layer chain, ...).
struct DimensionError : Error {
  using Error::Error;
};

// Semantically invalid data (non-RCT rows in a moment batch, empty batch,
// probabilities outside (0,1), unknown arm ids, malformed CSV, ...).
struct DataError : Error {
  using Error::Error;
};

// Invalid or inconsistent configuration values.
struct ConfigError : Error {
  using Error::Error;
};

// Operation called in the wrong order (backward before forward, ...).
struct StateError : Error {
  using Error::Error;
};

// Training produced non-finite values; carries the step at which it happened.
struct DivergenceError : Error {
  explicit DivergenceError(const std::string& what, long step_at)
      : Error(what), step(step_at) {}
  long step;
};

// File / serialization problems.
struct IoError : Error {
  using Error::Error;
};

enum class LogLevel : int { kError = 0, kInfo = 1, kDebug = 2 };

// Level comes from the FUSION_LOG environment variable {error, info, debug};
// defaults to error. Messages go to stderr so artifact files stay clean.
LogLevel log_level();
void log_message(LogLevel level, const std::string& msg);

inline void log_info(const std::string& msg) { log_message(LogLevel::kInfo, msg); }
inline void log_debug(const std::string& msg) { log_message(LogLevel::kDebug, msg); }
inline void log_error(const std::string& msg) { log_message(LogLevel::kError, msg); }

}  // namespace fusion
