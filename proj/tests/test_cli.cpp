#include <unistd.h>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "rmlab/config.hpp"
#include "rmlab/error.hpp"
#include "rmlab/io_util.hpp"
#include "rmlab/manifest.hpp"
#include "rmlab/runner.hpp"

using namespace rmlab;
namespace fs = std::filesystem;

namespace {

// Fresh scratch root per test case so runs never collide.
struct ScratchRoot {
  fs::path path;
  explicit ScratchRoot(const char* tag) {
    path = fs::temp_directory_path() /
           (std::string("rmlab_cli_") + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~ScratchRoot() { fs::remove_all(path); }
};

std::map<std::string, std::string> dir_hashes(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    out[fs::relative(entry.path(), dir).string()] = file_hash_hex(entry.path());
  }
  return out;
}

}  // namespace

TEST_CASE("config parses sections, comments and typed values") {
  const std::string text =
      "# top comment\n"
      "[run]\n"
      "seed = 7\n"
      "\n"
      "[zoo]\n"
      "count = 4   # trailing comment\n"
      "spread = 1.5\n"
      "[rft]\n"
      "sft_arm = true\n"
      "grader = implied\n";
  Config cfg = Config::from_text(text, "test.ini");
  CHECK(cfg.get_int("run.seed") == 7);
  CHECK(cfg.get_int("zoo.count") == 4);
  CHECK(cfg.get_real("zoo.spread") == 1.5);
  CHECK(cfg.get_bool("rft.sft_arm") == true);
  CHECK(cfg.get_text("rft.grader") == "implied");
  CHECK(cfg.has("zoo.count"));
  CHECK(!cfg.has("zoo.order"));
}

TEST_CASE("config getters record consumed values including defaults") {
  Config cfg = Config::from_text("[zoo]\ncount = 3\n", "t.ini");
  CHECK(cfg.consumed().empty());
  cfg.get_int("zoo.count");
  cfg.get_int("zoo.order", 2);          // default
  cfg.get_real("gen.perturb_eps", 0.25);
  const auto& used = cfg.consumed();
  CHECK(used.at("zoo.count") == "3");
  CHECK(used.at("zoo.order") == "2");
  CHECK(used.at("gen.perturb_eps") == "0.25");
  CHECK(used.size() == 3);
}

TEST_CASE("config rejects malformed input with the origin and line") {
  auto message_of = [](const std::string& text) {
    try {
      Config::from_text(text, "bad.ini");
      return std::string();
    } catch (const Error& e) {
      return std::string(e.what());
    }
  };

  std::string msg = message_of("[zoo]\ncount = 1\nfreq = 2\n");
  CHECK(msg.find("bad.ini:3") != std::string::npos);
  CHECK(msg.find("unknown key 'zoo.freq'") != std::string::npos);

  msg = message_of("[zoo]\ncount = soon\n");
  CHECK(msg.find("bad.ini:2") != std::string::npos);
  CHECK(msg.find("integer") != std::string::npos);

  msg = message_of("[zoo]\ncount = 1\ncount = 2\n");
  CHECK(msg.find("duplicate key 'zoo.count'") != std::string::npos);

  msg = message_of("count = 1\n");
  CHECK(msg.find("before any [section]") != std::string::npos);

  msg = message_of("[zoo\ncount = 1\n");
  CHECK(msg.find("unterminated") != std::string::npos);

  msg = message_of("[zoo]\nspread = 1e999\n");
  CHECK(msg.find("not finite") != std::string::npos);
}

TEST_CASE("overrides replace file values and are type checked") {
  Config cfg = Config::from_text("[zoo]\ncount = 3\n", "t.ini");
  cfg.apply_override("zoo.count=9");
  CHECK(cfg.get_int("zoo.count") == 9);
  cfg.apply_override("sampling.top_p = 0.85");
  CHECK(cfg.get_real("sampling.top_p") == 0.85);

  CHECK_THROWS_AS(cfg.apply_override("zoo.count"), Error);
  CHECK_THROWS_AS(cfg.apply_override("zoo.nope=1"), Error);
  CHECK_THROWS_AS(cfg.apply_override("zoo.count=many"), Error);
}

TEST_CASE("typed access is checked against the schema") {
  Config cfg = Config::from_text("[zoo]\ncount = 3\n", "t.ini");
  CHECK_THROWS_AS(cfg.get_real("zoo.count"), Error);     // integer key
  CHECK_THROWS_AS(cfg.get_int("zoo.spread", 1), Error);  // real key
  CHECK_THROWS_AS(cfg.get_int("zoo.missing_entirely"), Error);
  CHECK_THROWS_AS(cfg.get_int("zoo.vocab"), Error);  // required but absent
}

TEST_CASE("config content hash tracks entries only") {
  Config a = Config::from_text("[zoo]\ncount = 3\nspread = 1.0\n", "a.ini");
  Config b = Config::from_text("[zoo]\nspread = 1.0\ncount = 3\n", "b.ini");
  CHECK(a.content_hash() == b.content_hash());  // order and origin irrelevant

  Config c = Config::from_text("[zoo]\ncount = 4\nspread = 1.0\n", "a.ini");
  CHECK(a.content_hash() != c.content_hash());

  // consuming values does not change the hash
  std::string before = a.content_hash();
  a.get_int("zoo.count");
  CHECK(a.content_hash() == before);
}

TEST_CASE("manifest json round-trips") {
  RunManifest m;
  m.subcommand = "zoo";
  m.config = {{"zoo.count", "3"}, {"run.seed", "42"}};
  m.root_seed = 42;
  m.input_hashes = {{"/tmp/in.ini", "aaaa"}};
  m.output_hashes = {{"zoo.json", "bbbb"}};
  m.wall_clock_sec = 1.25;

  RunManifest back = manifest_from_json(manifest_json(m));
  CHECK(back.tool_version == m.tool_version);
  CHECK(back.subcommand == "zoo");
  CHECK(back.config == m.config);
  CHECK(back.root_seed == 42);
  CHECK(back.input_hashes == m.input_hashes);
  CHECK(back.output_hashes == m.output_hashes);
  CHECK(back.wall_clock_sec == 1.25);
  CHECK(back.determinism == "same-binary");

  nlohmann::json j = manifest_json(m);
  j["format"] = "run-manifest-v9";
  CHECK_THROWS_AS(manifest_from_json(j), Error);
  CHECK_THROWS_AS(manifest_from_json(nlohmann::json::object()), Error);
}

TEST_CASE("run directory verification spots tampering") {
  ScratchRoot root("verify");
  fs::path dir = root.path / "run";
  fs::create_directories(dir);
  write_file_atomic(dir / "out.txt", "payload\n");

  RunManifest m;
  m.subcommand = "zoo";
  m.output_hashes["out.txt"] = file_hash_hex(dir / "out.txt");
  write_manifest(dir, m);

  CHECK(verify_run_dir(dir).empty());

  write_file_atomic(dir / "out.txt", "tampered\n");
  std::vector<std::string> problems = verify_run_dir(dir);
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].find("hash mismatch") != std::string::npos);
  CHECK(problems[0].find("out.txt") != std::string::npos);

  fs::remove(dir / "out.txt");
  problems = verify_run_dir(dir);
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].find("output missing") != std::string::npos);

  CHECK_THROWS_AS(read_manifest(root.path / "nowhere"), Error);
}

TEST_CASE("zoo subcommand produces a verifiable deterministic run") {
  ScratchRoot root("zoo");

  RunOptions opts;
  opts.subcommand = "zoo";
  opts.overrides = {"zoo.count=3", "zoo.vocab=5", "zoo.order=1", "run.seed=7"};
  opts.run_root = root.path;

  RunOutcome first = run_subcommand(opts);
  REQUIRE(first.status == 0);
  REQUIRE(fs::exists(first.run_dir / "manifest.json"));
  CHECK(fs::exists(first.run_dir / "zoo.json"));
  CHECK(fs::exists(first.run_dir / "policy_00.json"));
  CHECK(fs::exists(first.run_dir / "policy_02.json"));

  RunManifest m = read_manifest(first.run_dir);
  CHECK(m.subcommand == "zoo");
  CHECK(m.root_seed == 7);
  CHECK(m.config.at("zoo.count") == "3");
  CHECK(m.output_hashes.size() >= 4);

  // the built-in verifier accepts the fresh run
  RunOptions vopts;
  vopts.subcommand = "verify";
  vopts.target_dir = first.run_dir;
  RunOutcome vout = run_subcommand(vopts);
  CHECK(vout.status == 0);
  CHECK(vout.message.find("ok") != std::string::npos);

  // a second identical run reproduces every artifact byte for byte
  RunOutcome second = run_subcommand(opts);
  REQUIRE(second.status == 0);
  CHECK(second.run_dir != first.run_dir);
  auto h1 = dir_hashes(first.run_dir);
  auto h2 = dir_hashes(second.run_dir);
  h1.erase("manifest.json");  // wall clock may differ
  h2.erase("manifest.json");
  CHECK(h1 == h2);

  // tamper, then verify again: nonzero status and a pointed message
  write_file_atomic(first.run_dir / "zoo.json", "{}\n");
  vout = run_subcommand(vopts);
  CHECK(vout.status == 1);
  CHECK(vout.message.find("zoo.json") != std::string::npos);
}

TEST_CASE("failing runs leave a marker instead of a manifest") {
  ScratchRoot root("fail");
  RunOptions opts;
  opts.subcommand = "pretrain";  // no dataset configured
  opts.run_root = root.path;

  RunOutcome out = run_subcommand(opts);
  CHECK(out.status == 1);
  CHECK(out.message.find("pretrain.dataset") != std::string::npos);
  REQUIRE(!out.run_dir.empty());
  CHECK(fs::exists(out.run_dir / "failed.json"));
  CHECK(!fs::exists(out.run_dir / "manifest.json"));
}

TEST_CASE("unknown subcommands are rejected without side effects") {
  ScratchRoot root("unknown");
  RunOptions opts;
  opts.subcommand = "train";
  opts.run_root = root.path;
  RunOutcome out = run_subcommand(opts);
  CHECK(out.status == 1);
  CHECK(out.message.find("unknown subcommand") != std::string::npos);
  CHECK(fs::is_empty(root.path));

  RunOptions vopts;
  vopts.subcommand = "verify";  // no --dir
  RunOutcome vout = run_subcommand(vopts);
  CHECK(vout.status == 1);
  CHECK(vout.message.find("--dir") != std::string::npos);
}

TEST_CASE("grad-check subcommand runs end to end") {
  ScratchRoot root("gradcheck");
  RunOptions opts;
  opts.subcommand = "grad-check";
  opts.overrides = {"gradcheck.pairs=2", "net.embed_dim=4", "net.hidden_dim=6",
                    "zoo.vocab=5", "run.seed=3"};
  opts.run_root = root.path;

  RunOutcome out = run_subcommand(opts);
  REQUIRE(out.status == 0);
  CHECK(fs::exists(out.run_dir / "gradcheck.json"));
  CHECK(fs::exists(out.run_dir / "manifest.json"));

  const std::string report = read_file(out.run_dir / "gradcheck.json");
  CHECK(report.find("max_err") != std::string::npos);
}
