#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace egoexo::cli {

/// Entry point shared by the executable and tests. `args` excludes the
/// program name. Returns the process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace egoexo::cli
