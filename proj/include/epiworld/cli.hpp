#pragma once

#include <string>

namespace epiworld {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Usage text listing every subcommand and flag.
std::string usage();

/// Batch entry point. Writes artifacts only inside --out; on failure writes
/// an error JSON to stderr and to <out>/error.json and returns kExitFailure.
/// Unknown or missing subcommands return kExitUsage.
int run(int argc, const char* const* argv);

} // namespace epiworld
