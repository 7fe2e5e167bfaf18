#pragma once

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace pgd {

// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Runs the command line `pgd <args...>` (args excludes the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Flat key=value file; blank lines and lines starting with '#' are ignored.
std::map<std::string, std::string> read_config_file(const std::string& path);

}  // namespace pgd
