#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ucomp {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitDiverged = 2;

/// Runs `ucomp <command> [flags]`; args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace ucomp
