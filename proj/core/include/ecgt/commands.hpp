#pragma once

#include <string>
#include <vector>

namespace ecgt {

// All CLI behavior lives here so it is directly testable; the binary in
// tools/ is a thin forwarder. Returns the process exit status; errors are
// reported as a machine-readable JSON record on stderr.
int run_command(const std::vector<std::string>& args);

}  // namespace ecgt
