#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace promptattrib {

// Runs one subcommand. args[0] is the program name. Returns 0 on success, 2
// on usage or configuration errors and 1 on runtime failures; messages go to
// `err`.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace promptattrib
