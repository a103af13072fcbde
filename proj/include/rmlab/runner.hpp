#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace rmlab {

struct RunOptions {
  std::string subcommand;
  std::filesystem::path config_path;   // empty runs on schema defaults
  std::vector<std::string> overrides;  // repeated --set section.key=value
  std::filesystem::path run_root = "runs";
  std::filesystem::path target_dir;    // verify: the run directory to check
  std::size_t workers = 1;
};

struct RunOutcome {
  int status = 0;                 // process exit code
  std::filesystem::path run_dir;  // empty for verify
  std::string message;
};

const std::vector<std::string>& subcommand_names();

// Executes one pipeline stage in a fresh run directory under run_root:
// artifacts first, then manifest.json with input/output hashes. A failing
// run leaves failed.json in its directory and never a manifest.
RunOutcome run_subcommand(const RunOptions& opts);

}  // namespace rmlab
