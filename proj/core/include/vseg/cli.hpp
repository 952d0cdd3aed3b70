#pragma once

#include <string>

namespace vseg::cli {

// Entry point behind the vseg binary. Exit codes: 0 success, 1 validation
// error (bad flags, malformed inputs), 2 runtime failure.
int run(int argc, const char* const* argv);

// Rendered --help text ("" for the top-level app, otherwise a subcommand
// name). Used by the defaults self-consistency test.
std::string help(const std::string& subcommand = "");

}  // namespace vseg::cli
