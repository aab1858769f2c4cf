#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vton::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2 };

/// Entry point shared by the executable and the tests. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vton::cli
