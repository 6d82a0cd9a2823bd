#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace planner::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitInfeasible = 2;
inline constexpr int kExitUnsafe = 3;

// Runs `planner <args...>` writing to the given streams; args excludes the
// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace planner::cli
