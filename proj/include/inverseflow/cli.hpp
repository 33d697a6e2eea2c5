#pragma once

#include <string>
#include <vector>

namespace inverseflow {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

// Parses `args` (args[0] is the program name) and runs one subcommand.
int cli_dispatch(const std::vector<std::string>& args);
int cli_dispatch(int argc, char** argv);

}  // namespace inverseflow
