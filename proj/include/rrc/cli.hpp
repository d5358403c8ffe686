#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rrc::cli {

enum ExitCode : int {
  kOk = 0,
  kValidation = 1,
  kIo = 2,
  kOracleFailure = 3,
};

/// Runs one command line (without the program name), e.g.
/// {"simulate", "--graph", "ring5.json", "--y0", "5,0,0,0,0"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rrc::cli
