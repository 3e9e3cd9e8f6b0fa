#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace iterflow {

// Exit codes scripts can rely on.
enum ExitCode : int {
  kExitOk = 0,
  kExitOperatorFailure = 1,
  kExitUsage = 2,
  kExitLocked = 3,
};

// Entry point of the `iterflow` binary; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace iterflow
