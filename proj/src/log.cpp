#include "loglab/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace loglab {

namespace {
std::atomic<Verbosity> g_verbosity{Verbosity::warn};
std::mutex g_mutex;
}  // namespace

void set_verbosity(Verbosity v) { g_verbosity = v; }
Verbosity verbosity() { return g_verbosity; }

void warn(std::string_view message) {
  if (g_verbosity == Verbosity::quiet) return;
  std::lock_guard lock(g_mutex);
  std::cerr << "warning: " << message << '\n';
}

void info(std::string_view message) {
  if (g_verbosity != Verbosity::info) return;
  std::lock_guard lock(g_mutex);
  std::cerr << message << '\n';
}

}  // namespace loglab
