#pragma once

#include <string>
#include <vector>

#include "v2b/oracle.hpp"

namespace v2b::cli {

// "missing,energy,demand" -> objective weights; each entry must be >= 0.
oracle::Weights parse_weights(const std::string& text);

// All *.json episode files in `dir` (non-recursive, filename order); files of
// other formats are skipped.  Every file must describe the same charger site.
struct EpisodeSet {
    std::vector<Episode> episodes;
    std::vector<std::string> names;  // file stems, aligned with episodes
    std::vector<ChargerSpec> chargers;
};
EpisodeSet load_episode_dir(const std::string& dir);

// Entry point; returns the process exit code instead of calling exit() so
// tests can drive it in-process.  0 success, 2 bad config/usage, 3 infeasible
// or solver failure, 4 numeric failure.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args exclude argv[0]

}  // namespace v2b::cli
