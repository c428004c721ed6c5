#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sourceswap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitFatal = 2;

/// Runs the command line `args` (without the program name). Output that would
/// go to stdout/stderr is written to `out`/`err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Help text of the top-level app, or of one subcommand when `command` is set.
std::string help_text(const std::string& command = "");

/// Every long flag the app and its subcommands accept, as "command --flag".
std::vector<std::string> all_flags();

}  // namespace sourceswap::cli
