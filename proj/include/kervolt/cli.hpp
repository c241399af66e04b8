#pragma once

#include <string>
#include <vector>

namespace kervolt::cli {

// Runs one CLI invocation (args exclude the program name). Returns the
// process exit code: 0 on success, 2 on usage errors, 1 on runtime failures.
int run(const std::vector<std::string>& args);

}  // namespace kervolt::cli
