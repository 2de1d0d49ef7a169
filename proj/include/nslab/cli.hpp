#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nslab::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConfigError = 2,
  kUnreachable = 3,
  kLowConfidence = 4,
};

/// Entry point of the netspectre_lab tool. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nslab::cli
