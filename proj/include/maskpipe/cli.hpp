#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace maskpipe {

// Entry point behind the maskpipe binary; `args` excludes the program name.
// Returns 0 on success, 1 on a runtime error and 2 on a usage error.
int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err);

}  // namespace maskpipe
