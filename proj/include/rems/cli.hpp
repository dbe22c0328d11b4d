#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rems {

/// Exit codes of the command-line runner.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfigInvalid = 2,
  kExitIo = 3,
  kExitChainInvalid = 4,
  kExitNotClaimed = 5,
};

/// Runs `rems <args...>`. Errors are written to `err` as one JSON object.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rems
