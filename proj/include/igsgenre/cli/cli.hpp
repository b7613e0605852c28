#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace igsgenre::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

/// Runs the command line in-process. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace igsgenre::cli
