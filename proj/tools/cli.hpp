#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace voxreg::cli {

enum ExitCode : int {
  kSuccess = 0,
  kInternal = 1,
  kUsage = 2,
  kIo = 3,
  kNumerical = 4,
};

/// Runs one invocation; args[0] is the program name. Errors are reported as a
/// single tab-separated line on `err`: "error<TAB>kind<TAB>message".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

}  // namespace voxreg::cli
