#pragma once

#include <string>
#include <vector>

namespace hgdc {

/// Runs a CLI invocation ("gen-data", "train", "eval", "ablate",
/// "dump-corr"). Returns the process exit code: 0 success, 1 runtime
/// failure, 2 usage or config errors.
int run_cli(const std::vector<std::string>& args);

}  // namespace hgdc
