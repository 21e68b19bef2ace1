#include "fpkflow/log.hpp"

#include <atomic>
#include <iostream>

namespace fpkflow::log {

namespace {
std::atomic<bool> g_quiet{false};
}

void set_quiet(bool quiet) { g_quiet.store(quiet); }

void warn(const std::string& message) {
  if (!g_quiet.load()) std::cerr << "[warn] " << message << "\n";
}

void info(const std::string& message) {
  if (!g_quiet.load()) std::cerr << "[info] " << message << "\n";
}

}  // namespace fpkflow::log
