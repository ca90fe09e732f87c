#pragma once

#include <string>

namespace ukt {

// Progress and warnings go to stderr unless quiet mode is on.
void set_quiet(bool quiet);
bool quiet();
void log_info(const std::string& message);
void log_warn(const std::string& message);

}  // namespace ukt
