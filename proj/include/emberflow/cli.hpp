#pragma once

#include <ostream>

namespace emberflow {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitRuntime = 3;  // runtime failure, divergence, failed gradient check

// Parses argv (argv[0] is the program name) and runs one subcommand:
// prepare, visualize, train, evaluate, gradcheck or synth.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace emberflow
