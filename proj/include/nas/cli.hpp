#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nas::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kInvalidData = 3,  // format, validation, domain and argument errors
  kIo = 4,
};

/// Runs one `nas` subcommand. `args` excludes the program name. Requested
/// data goes to `out`; logs and diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nas::cli
