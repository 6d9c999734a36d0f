#pragma once

#include <string>

namespace hgdc {

void set_quiet(bool quiet);
bool quiet();

void info(const std::string& msg);  // suppressed by --quiet
void warn(const std::string& msg);  // always printed, to stderr

}  // namespace hgdc
