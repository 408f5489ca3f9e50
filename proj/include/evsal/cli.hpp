#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "evsal/error.hpp"

namespace evsal {

enum ExitStatus : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumeric = 3,
};

ExitStatus exit_status_for(ErrorKind kind);

/// Runs the multi-command tool; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace evsal
