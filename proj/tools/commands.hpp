#ifndef KNNCLEAN_TOOLS_COMMANDS_HPP
#define KNNCLEAN_TOOLS_COMMANDS_HPP

#include <ostream>

namespace knnclean {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// Entry point for the knnclean command line: synth, corrupt, run,
/// evaluate, ksweep, inspect.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace knnclean

#endif  // KNNCLEAN_TOOLS_COMMANDS_HPP
