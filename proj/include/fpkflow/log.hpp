#pragma once

#include <string>

namespace fpkflow::log {

void warn(const std::string& message);
void info(const std::string& message);

/// Suppress info/warn output (used by tests and the replay path).
void set_quiet(bool quiet);

}  // namespace fpkflow::log
