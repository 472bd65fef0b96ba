#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace slm {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitModelInvalid = 3, kExitEstimation = 4 };

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace slm
