#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lager::cli {

/// Parses argv (argv[0] is the program name) and runs one subcommand.
/// Returns 0 on success, 1 for validation/argument errors, 2 for I/O
/// errors and 3 for numeric errors.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace lager::cli
