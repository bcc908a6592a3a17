#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "synth/prevalence.hpp"

namespace synth::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Runs `synthnews <args...>` (args excludes the program name). Returns the
// exit code; diagnostics go to `err`, summaries to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Flat key=value lines; blank lines and lines starting with '#' are skipped.
// Keys are long option names without dashes. Throws UsageError on a line
// without '=' or a repeated key.
std::map<std::string, std::string> load_config(const std::filesystem::path& path);

// "unreliable/B10K", "reliable/ALL", "ALL/ALL".
prevalence::Group parse_group(const std::string& name);

// date,group,aggregation,n_articles,n_synthetic,n_sites,pct for every group,
// micro then macro, by date.
std::string daily_csv(const prevalence::Joined& joined, const std::vector<prevalence::Group>& groups);

}  // namespace synth::cli
