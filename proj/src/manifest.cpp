#include "rmlab/manifest.hpp"

#include "rmlab/error.hpp"
#include "rmlab/io_util.hpp"

namespace rmlab {

using nlohmann::json;

namespace {

json string_map_json(const std::map<std::string, std::string>& m) {
  json out = json::object();
  for (const auto& [k, v] : m) out[k] = v;
  return out;
}

std::map<std::string, std::string> string_map_from_json(const json& j) {
  std::map<std::string, std::string> out;
  for (auto it = j.begin(); it != j.end(); ++it)
    out[it.key()] = it.value().get<std::string>();
  return out;
}

}  // namespace

json manifest_json(const RunManifest& m) {
  json j;
  j["format"] = "run-manifest-v1";
  j["tool_version"] = m.tool_version;
  j["subcommand"] = m.subcommand;
  j["config"] = string_map_json(m.config);
  j["root_seed"] = m.root_seed;
  j["input_hashes"] = string_map_json(m.input_hashes);
  j["output_hashes"] = string_map_json(m.output_hashes);
  j["wall_clock_sec"] = m.wall_clock_sec;
  j["determinism"] = m.determinism;
  return j;
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  try {
    require(j.at("format").get<std::string>() == "run-manifest-v1",
            "unsupported manifest format '",
            j.at("format").get<std::string>(), "'");
    m.tool_version = j.at("tool_version").get<std::string>();
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config = string_map_from_json(j.at("config"));
    m.root_seed = j.at("root_seed").get<std::uint64_t>();
    m.input_hashes = string_map_from_json(j.at("input_hashes"));
    m.output_hashes = string_map_from_json(j.at("output_hashes"));
    m.wall_clock_sec = j.at("wall_clock_sec").get<double>();
    m.determinism = j.at("determinism").get<std::string>();
  } catch (const json::exception& e) {
    fail("bad manifest: ", e.what());
  }
  return m;
}

void write_manifest(const std::filesystem::path& run_dir, const RunManifest& m) {
  write_file_atomic(run_dir / "manifest.json", manifest_json(m).dump(2) + "\n");
}

RunManifest read_manifest(const std::filesystem::path& run_dir) {
  const auto path = run_dir / "manifest.json";
  require(std::filesystem::exists(path), "no manifest at ", path.string());
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail("manifest ", path.string(), ": ", e.what());
  }
  return manifest_from_json(j);
}

std::vector<std::string> verify_run_dir(const std::filesystem::path& run_dir) {
  RunManifest m = read_manifest(run_dir);
  std::vector<std::string> problems;

  for (const auto& [rel, want] : m.output_hashes) {
    const auto path = run_dir / rel;
    if (!std::filesystem::exists(path)) {
      problems.push_back("output missing: " + rel);
      continue;
    }
    std::string got = file_hash_hex(path);
    if (got != want)
      problems.push_back("output hash mismatch: " + rel + " expected " + want +
                         " got " + got);
  }

  for (const auto& [path_str, want] : m.input_hashes) {
    const std::filesystem::path path(path_str);
    if (!std::filesystem::exists(path)) continue;  // inputs may have moved on
    std::string got = file_hash_hex(path);
    if (got != want)
      problems.push_back("input hash mismatch: " + path_str + " expected " +
                         want + " got " + got);
  }
  return problems;
}

}  // namespace rmlab
