#pragma once

#include <string>

namespace oewt {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

/// Current verbosity. Initialized from the OEWT_LOG environment variable
/// (quiet|info|debug, or 0|1|2); defaults to info.
LogLevel log_level();

void set_log_level(LogLevel level);

/// Diagnostic lines go to standard error so result streams stay clean.
void log_info(const std::string& message);
void log_debug(const std::string& message);

}  // namespace oewt
