#include "hgdc/log.hpp"

#include <iostream>

namespace hgdc {

namespace {
bool g_quiet = false;
}

void set_quiet(bool quiet) { g_quiet = quiet; }
bool quiet() { return g_quiet; }

void info(const std::string& msg) {
  if (!g_quiet) std::cerr << "[info] " << msg << '\n';
}

void warn(const std::string& msg) { std::cerr << "[warn] " << msg << '\n'; }

}  // namespace hgdc
