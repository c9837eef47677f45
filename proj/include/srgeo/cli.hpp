#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace srgeo::cli {

// Runs the tool on the given arguments (program name excluded), writing to
// the supplied streams. Returns the process exit code: 0 success, 1 usage
// error, 2 numerical failure (diagnostic JSON on err), 3 failed invariant
// suite. Taking streams keeps runs byte-comparable in tests.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace srgeo::cli
