#pragma once

#include <string_view>

namespace fera {

/// Writes "[fera] <level>: <message>" to stderr. Quiet when FERA_QUIET is set.
void log_warning(std::string_view message);
void log_info(std::string_view message);

/// Emits the warning only the first time this exact key is seen in the process.
void log_warning_once(std::string_view key, std::string_view message);

}  // namespace fera
