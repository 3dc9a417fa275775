#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace faim {

/// Runs one CLI invocation (args excludes the program name). Returns the exit
/// status: 0 success, 1 bad input or configuration, 2 internal error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace faim
