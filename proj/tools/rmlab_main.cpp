#include <cstdlib>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "rmlab/manifest.hpp"
#include "rmlab/runner.hpp"

namespace {

std::size_t default_workers() {
  if (const char* env = std::getenv("RMLAB_WORKERS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
  }
  unsigned hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

std::string default_run_root() {
  if (const char* env = std::getenv("RMLAB_RUN_ROOT")) return env;
  return "runs";
}

const char* describe(const std::string& name) {
  if (name == "zoo") return "build a seeded policy pool and save it";
  if (name == "gen") return "sample a train, ranked or eval dataset from a policy pool";
  if (name == "pretrain") return "contrastive pre-training on policy-contrast triples";
  if (name == "sft") return "ranking fine-tune of a pre-trained checkpoint";
  if (name == "eval") return "preference accuracy of a checkpoint on an eval set";
  if (name == "rft") return "policy-gradient fine-tuning against a reward scorer";
  if (name == "scaling") return "train a ladder of net sizes and fit the loss power law";
  if (name == "grad-check") return "finite-difference audit of the analytic gradient";
  return "recompute and check a run directory's manifest hashes";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale reward model laboratory"};
  app.set_version_flag("--version", std::string(rmlab::kToolVersion));
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_root = default_run_root();
  std::string verify_dir;
  std::size_t workers = default_workers();

  for (const std::string& name : rmlab::subcommand_names()) {
    CLI::App* sub = app.add_subcommand(name, describe(name));
    if (name == "verify") {
      sub->add_option("--dir", verify_dir, "run directory to verify")->required();
      continue;
    }
    sub->add_option("--config", config_path, "experiment config file");
    sub->add_option("--set", overrides,
                    "override a config key, section.key=value (repeatable)");
    sub->add_option("--run-root", run_root,
                    "directory that run directories are created under");
    sub->add_option("--workers", workers, "worker thread count");
  }

  CLI11_PARSE(app, argc, argv);

  rmlab::RunOptions opts;
  opts.subcommand = app.get_subcommands().front()->get_name();
  opts.config_path = config_path;
  opts.overrides = overrides;
  opts.run_root = run_root;
  opts.target_dir = verify_dir;
  opts.workers = workers;

  rmlab::RunOutcome outcome = rmlab::run_subcommand(opts);
  if (outcome.status == 0) {
    std::cout << outcome.message << "\n";
  } else {
    std::cerr << "error: " << outcome.message << "\n";
  }
  return outcome.status;
}
