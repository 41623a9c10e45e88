#pragma once

#include <string>
#include <vector>

namespace cityfm::cli {

// One CLI invocation; args excludes the program name. Returns the process
// exit code: 0 success, 1 runtime error, 2 usage error. Writes outputs only
// under the --out directory of the invoked subcommand.
int run(const std::vector<std::string>& args);

}  // namespace cityfm::cli
