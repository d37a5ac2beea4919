#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace unict::cli {

/// Runs the command line `args` (args[0] is the program name). Returns the
/// process exit code: 0 on success, 1 on a runtime failure, 2 on a usage or
/// configuration error. Failures print one line "error: <kind>: <message>"
/// to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace unict::cli
