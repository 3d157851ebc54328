#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace seqscope::cli {

/// Runs one command line (without the program name). Returns 0 on success,
/// 2 on flag errors and 1 on runtime failures.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace seqscope::cli
