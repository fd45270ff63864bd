#pragma once

#include <ostream>

namespace posefit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitFlagged = 4;

/// Entry point of the `posefit` tool (subcommands generate, track, eval,
/// bench). Failures print one JSON line {"error", "exit_code", "message"} to
/// `err` and return the matching exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace posefit
