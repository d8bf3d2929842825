#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace poolforge::cli {

// Runs one command (args exclude the program name). Returns the process exit
// status: 0 success, 1 data error (JSON error record on err), 2 usage error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace poolforge::cli
