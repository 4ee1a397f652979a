#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace vwsd {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitProvider = 3,
};

/// Entry point of the `vwsd` tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vwsd
