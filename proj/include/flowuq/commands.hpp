#pragma once

// Subcommands of the `flowuq` executable. Each returns a process exit code:
// 0 success, 2 configuration error, 3 numerical abort (1 for anything else).

#include <string>
#include <vector>

namespace flowuq::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Parses `args` (without the program name) and runs the selected command.
int run(const std::vector<std::string>& args);
int main(int argc, char** argv);

}  // namespace flowuq::cli
