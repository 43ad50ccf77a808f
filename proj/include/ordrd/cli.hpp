#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ordrd {

// Subcommands: validate, run, falsify, simulate. args excludes the program
// name. Exit codes: 0 success, 2 manifest/usage, 3 data, 4 fit, 5 balance,
// 6 estimation.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ordrd
