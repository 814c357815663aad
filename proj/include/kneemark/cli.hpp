#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kneemark {

// Command-line entry point. Returns 0 on success, 1 on a runtime failure and
// 2 on a usage error. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace kneemark
