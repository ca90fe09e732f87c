#include "ukt/log.hpp"

#include <atomic>
#include <iostream>

namespace ukt {

namespace {
std::atomic<bool> g_quiet{false};
}

void set_quiet(bool on) { g_quiet = on; }
bool quiet() { return g_quiet; }

void log_info(const std::string& message) {
    if (!g_quiet) std::cerr << "[ukt] " << message << '\n';
}

void log_warn(const std::string& message) {
    if (!g_quiet) std::cerr << "[ukt] warning: " << message << '\n';
}

}  // namespace ukt
