#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace rmlab {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Everything needed to audit a run: what ran, with which configuration and
// seed, over which input bytes, producing which output bytes. Wall clock is
// the only field that legitimately differs between identical runs, which is
// why it lives here and never inside artifacts.
struct RunManifest {
  std::string tool_version{kToolVersion};
  std::string subcommand;
  std::map<std::string, std::string> config;  // resolved keys, defaults included
  std::uint64_t root_seed = 0;
  std::map<std::string, std::string> input_hashes;   // path -> content hash
  std::map<std::string, std::string> output_hashes;  // run-dir relative
  double wall_clock_sec = 0;
  std::string determinism = "same-binary";  // hashes reproduce with this build
};

nlohmann::json manifest_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

// manifest.json inside the run directory, written atomically.
void write_manifest(const std::filesystem::path& run_dir, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& run_dir);

// Recomputes hashes against the files on disk. Output files must exist and
// match; input files are checked when still present. Returns human-readable
// mismatch lines, empty when everything verifies.
std::vector<std::string> verify_run_dir(const std::filesystem::path& run_dir);

}  // namespace rmlab
