#pragma once

#include <string>
#include <vector>

namespace motionpred::cli {

// Full command-line surface, callable in-process (tests drive it without
// spawning). args excludes the program name. Every command stages its outputs
// and a manifest.json in memory and writes them into --out only on success
// (temp file + rename per file), so a failing run leaves nothing partial
// behind. Returns the process exit code; failures print one diagnostic line
// to stderr.
int run(const std::vector<std::string>& args);

}  // namespace motionpred::cli
