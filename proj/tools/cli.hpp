#pragma once

#include <string>
#include <vector>

namespace sensia::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;

// Runs one subcommand. argv[0] is the program name.
int run(const std::vector<std::string>& argv);

}  // namespace sensia::cli
