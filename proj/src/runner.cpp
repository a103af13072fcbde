#include "rmlab/runner.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "rmlab/config.hpp"
#include "rmlab/corpus.hpp"
#include "rmlab/error.hpp"
#include "rmlab/eval.hpp"
#include "rmlab/io_util.hpp"
#include "rmlab/manifest.hpp"
#include "rmlab/oracle.hpp"
#include "rmlab/policy.hpp"
#include "rmlab/reward_net.hpp"
#include "rmlab/rft.hpp"
#include "rmlab/rng.hpp"
#include "rmlab/scaling.hpp"
#include "rmlab/scorer.hpp"
#include "rmlab/trainer.hpp"

namespace rmlab {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Seed streams, one per independent purpose.
constexpr std::uint64_t kStreamZoo = 0x7a6f6f;
constexpr std::uint64_t kStreamTexts = 0x746578;
constexpr std::uint64_t kStreamInstruct = 0x696e73;
constexpr std::uint64_t kStreamTrain = 0x747269;
constexpr std::uint64_t kStreamVal = 0x76616c;
constexpr std::uint64_t kStreamNet = 0x6e6574;
constexpr std::uint64_t kStreamShuffle = 0x73687566;
constexpr std::uint64_t kStreamInit = 0x696e6974;
constexpr std::uint64_t kStreamTarget = 0x74676574;
constexpr std::uint64_t kStreamPrompt = 0x706d7074;
constexpr std::uint64_t kStreamRft = 0x726674;
constexpr std::uint64_t kStreamSftArm = 0x736674;
constexpr std::uint64_t kStreamGradCheck = 0x67636b;

struct RunContext {
  Config cfg;
  fs::path dir;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::map<std::string, std::string> input_hashes;
  std::vector<std::string> outputs;

  void note_input(const fs::path& path) {
    require(fs::exists(path), "input file missing: ", path.string());
    input_hashes[path.string()] = file_hash_hex(path);
  }

  // Registers an artifact name and returns where to write it.
  fs::path out_path(const std::string& rel) {
    outputs.push_back(rel);
    return dir / rel;
  }

  void write_text_artifact(const std::string& rel, const std::string& content) {
    write_file_atomic(out_path(rel), content);
  }

  void write_json_artifact(const std::string& rel, const json& j) {
    write_text_artifact(rel, j.dump(2) + "\n");
  }
};

Vocab vocab_from(const Config& cfg) {
  return Vocab::with_content(static_cast<int>(cfg.get_int("zoo.vocab", 12)));
}

SamplingParams sampling_from(const Config& cfg) {
  SamplingParams p;
  p.temperature = cfg.get_real("sampling.temperature", 1.0);
  p.top_p = cfg.get_real("sampling.top_p", 0.9);
  p.top_k = static_cast<int>(cfg.get_int("sampling.top_k", 50));
  p.max_len = static_cast<int>(cfg.get_int("sampling.max_len", 24));
  p.validate();
  return p;
}

CleanConfig clean_from(const Config& cfg) {
  CleanConfig c;
  c.repeat_window = static_cast<int>(cfg.get_int("clean.repeat_window", 4));
  c.max_repeats = static_cast<int>(cfg.get_int("clean.max_repeats", 2));
  c.max_len = static_cast<int>(cfg.get_int("clean.max_len", 24));
  c.validate();
  return c;
}

std::vector<MarkovPolicy> build_zoo(const Config& cfg, const Vocab& vocab,
                                    std::uint64_t seed) {
  int count = static_cast<int>(cfg.get_int("zoo.count", 8));
  int order = static_cast<int>(cfg.get_int("zoo.order", 1));
  double spread = cfg.get_real("zoo.spread", 1.0);
  require(count >= 2, "zoo.count must be >= 2, got ", count);
  std::vector<MarkovPolicy> pool;
  pool.reserve(count);
  for (int i = 0; i < count; ++i)
    pool.push_back(make_markov_policy(order, vocab, derive_seed(seed, kStreamZoo, i), spread));
  return pool;
}

std::vector<MarkovPolicy> load_or_build_zoo(RunContext& ctx, const Vocab& vocab) {
  std::string index = ctx.cfg.get_text("gen.zoo", "");
  if (index.empty()) return build_zoo(ctx.cfg, vocab, ctx.seed);

  ctx.note_input(index);
  json j;
  try {
    j = json::parse(read_file(index));
  } catch (const json::exception& e) {
    fail("zoo index ", index, ": ", e.what());
  }
  std::vector<MarkovPolicy> pool;
  try {
    fs::path base = fs::path(index).parent_path();
    for (const auto& name : j.at("files")) {
      fs::path p = base / name.get<std::string>();
      ctx.note_input(p);
      pool.push_back(MarkovPolicy::load(p));
    }
  } catch (const json::exception& e) {
    fail("zoo index ", index, ": ", e.what());
  }
  require(pool.size() >= 2, "zoo index ", index, " lists fewer than 2 policies");
  for (const MarkovPolicy& p : pool)
    require(p.vocab().size == vocab.size,
            "zoo policy ", p.id(), " has vocab ", p.vocab().size,
            ", config says ", vocab.size);
  return pool;
}

struct PromptSources {
  PromptSource prefix;
  PromptSource instruct;  // whole short texts
  double instruct_fraction = 0;

  // Deterministic per-seed choice between prefix cuts and whole texts.
  const PromptSource& pick(std::uint64_t seed) const {
    if (instruct_fraction <= 0) return prefix;
    Rng rng(derive_seed(seed, 0x6d6978));
    return rng.uniform() < instruct_fraction ? instruct : prefix;
  }
};

PromptSources prompt_sources(const Config& cfg, const Vocab& vocab,
                             std::uint64_t seed) {
  int texts = static_cast<int>(cfg.get_int("prompts.texts", 32));
  int text_len = static_cast<int>(cfg.get_int("prompts.text_len", 64));
  int min_prefix = static_cast<int>(cfg.get_int("prompts.min_prefix", 1));
  int max_prefix = static_cast<int>(cfg.get_int("prompts.max_prefix", 16));
  PromptSources out;
  out.prefix = PromptSource::random(vocab, texts, text_len, min_prefix,
                                    max_prefix, derive_seed(seed, kStreamTexts));
  out.instruct = PromptSource::random(vocab, texts, max_prefix, 1, max_prefix,
                                      derive_seed(seed, kStreamInstruct), true);
  out.instruct_fraction = cfg.get_real("prompts.instruct_fraction", 0.01);
  require(out.instruct_fraction >= 0 && out.instruct_fraction <= 1,
          "prompts.instruct_fraction must be in [0, 1], got ",
          out.instruct_fraction);
  return out;
}

std::vector<TrainTriple> make_pretrain_triples(
    const PromptSources& sources, std::span<const MarkovPolicy> pool,
    const SamplingParams& sampling, const CleanConfig& clean, std::size_t n,
    std::uint64_t seed, std::uint64_t stream, std::size_t workers) {
  std::vector<TrainTriple> triples(n);
  parallel_for(n, workers, [&](std::size_t i) {
    std::uint64_t s = derive_seed(seed, stream, i);
    triples[i] =
        build_pretrain_triple(sources.pick(s), pool, sampling, clean, s);
  });
  return triples;
}

std::vector<std::string> policy_ids(std::span<const MarkovPolicy> pool) {
  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const MarkovPolicy& p : pool) ids.push_back(p.id());
  return ids;
}

// Ordered pair of distinct pool indices.
std::pair<std::size_t, std::size_t> pick_pair(Rng& rng, std::size_t count) {
  std::size_t a = rng.below(count);
  std::size_t b = (a + 1 + rng.below(count - 1)) % count;
  return {a, b};
}

RankedTriple make_ranked_triple(const PromptSources& sources,
                                std::span<const MarkovPolicy> pool,
                                const SamplingParams& sampling,
                                const CleanConfig& clean, double perturb_eps,
                                std::uint64_t seed) {
  for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
    std::uint64_t s = derive_seed(seed, 0x72616e6b + attempt);
    Rng rng(derive_seed(s, 0));
    auto [a, b] = pick_pair(rng, pool.size());
    Tokens prompt = sample_prefix(sources.pick(s), derive_seed(s, 1));
    MarkovPolicy near = pool[a].perturbed(perturb_eps, derive_seed(s, 2));
    RankedTriple t;
    t.prompt = prompt;
    t.best = clean_trajectory(
        pool[a].sample(prompt, sampling, derive_seed(s, 3)).continuation(), clean);
    t.middle = clean_trajectory(
        near.sample(prompt, sampling, derive_seed(s, 4)).continuation(), clean);
    t.worst = clean_trajectory(
        pool[b].sample(prompt, sampling, derive_seed(s, 5)).continuation(), clean);
    if (t.best != t.middle && t.best != t.worst && t.middle != t.worst)
      return t;
  }
  fail("could not draw three distinct ranked continuations in 64 attempts; "
       "vocabulary or horizon is too small for ranked data");
}

EvalItem make_eval_item(const PromptSources& sources,
                        std::span<const MarkovPolicy> pool,
                        const SamplingParams& sampling, const CleanConfig& clean,
                        std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0));
  auto [a, b] = pick_pair(rng, pool.size());
  Tokens prompt = sample_prefix(sources.pick(seed), derive_seed(seed, 1));
  EvalItem item;
  item.prompt = prompt;
  item.trajectories.push_back(clean_trajectory(
      pool[a].sample(prompt, sampling, derive_seed(seed, 2)).continuation(), clean));
  item.trajectories.push_back(clean_trajectory(
      pool[a].sample(prompt, sampling, derive_seed(seed, 3)).continuation(), clean));
  item.trajectories.push_back(clean_trajectory(
      pool[b].sample(prompt, sampling, derive_seed(seed, 4)).continuation(), clean));
  item.category = pool[a].id();
  return item;
}

json train_report_json(const TrainReport& report) {
  json j;
  j["param_count"] = report.param_count;
  j["tokens_consumed"] = report.tokens_consumed;
  j["estimated_compute"] = report.estimated_compute;
  j["steps"] = report.step_losses.size();
  j["epoch_val_losses"] = report.epoch_val_losses;
  if (!report.step_losses.empty()) j["final_step_loss"] = report.step_losses.back();
  if (!report.epoch_val_losses.empty())
    j["final_val_loss"] = report.epoch_val_losses.back();
  return j;
}

std::string train_log_lines(const TrainReport& report) {
  std::ostringstream os;
  for (std::size_t i = 0; i < report.step_losses.size(); ++i) {
    json line;
    line["step"] = i + 1;
    line["loss"] = report.step_losses[i];
    line["tokens"] = report.step_tokens[i];
    os << line.dump() << "\n";
  }
  for (std::size_t e = 0; e < report.epoch_val_losses.size(); ++e) {
    json line;
    line["step"] = report.step_losses.size();
    line["epoch"] = e + 1;
    line["val_loss"] = report.epoch_val_losses[e];
    os << line.dump() << "\n";
  }
  return os.str();
}

OptimizerConfig optimizer_from(const Config& cfg, const std::string& section,
                               std::uint64_t seed) {
  OptimizerConfig opt;
  opt.kind = optimizer_from_string(
      cfg.get_text(section + ".optimizer", "adaptive_moments"));
  opt.lr = cfg.get_real(section + ".lr", 1e-3);
  opt.batch_size = static_cast<int>(cfg.get_int(section + ".batch_size", 32));
  opt.epochs = static_cast<int>(cfg.get_int(section + ".epochs", 1));
  opt.shuffle_seed = derive_seed(seed, kStreamShuffle);
  opt.validate();
  return opt;
}

RewardNetConfig net_config_from(const Config& cfg, const Vocab& vocab,
                                std::uint64_t seed) {
  RewardNetConfig net;
  net.vocab_total = vocab.total();
  net.embed_dim = static_cast<int>(cfg.get_int("net.embed_dim", 16));
  net.hidden_dim = static_cast<int>(cfg.get_int("net.hidden_dim", 32));
  net.encoder = encoder_from_string(cfg.get_text("net.encoder", "gated_recurrent"));
  net.precision = precision_from_string(cfg.get_text("net.precision", "f64"));
  net.init_seed = derive_seed(seed, kStreamNet);
  net.validate();
  return net;
}

// Train in the requested precision and hand back f64 params for saving.
template <class Real>
std::pair<NetParams<double>, TrainReport> train_stage(
    const RewardNetConfig& net, std::span<const PackedPair> train_pairs,
    std::span<const PackedPair> val_pairs, const OptimizerConfig& opt,
    LossKind kind, const std::vector<double>* init_flat) {
  NetParams<Real> params = init_params<Real>(net);
  if (init_flat) params.flat.assign(init_flat->begin(), init_flat->end());
  TrainReport report = train<Real>(params, train_pairs, val_pairs, opt, kind);
  NetParams<double> out;
  out.config = net;
  out.flat.assign(params.flat.begin(), params.flat.end());
  return {std::move(out), report};
}

std::pair<NetParams<double>, TrainReport> train_dispatch(
    const RewardNetConfig& net, std::span<const PackedPair> train_pairs,
    std::span<const PackedPair> val_pairs, const OptimizerConfig& opt,
    LossKind kind, const std::vector<double>* init_flat = nullptr) {
  if (net.precision == Precision::f32)
    return train_stage<float>(net, train_pairs, val_pairs, opt, kind, init_flat);
  return train_stage<double>(net, train_pairs, val_pairs, opt, kind, init_flat);
}

void run_zoo(RunContext& ctx) {
  Vocab vocab = vocab_from(ctx.cfg);
  std::vector<MarkovPolicy> pool = build_zoo(ctx.cfg, vocab, ctx.seed);
  json index;
  index["format"] = "policy-zoo-v1";
  index["vocab_size"] = vocab.size;
  index["ids"] = policy_ids(pool);
  std::vector<std::string> files;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "policy_%02zu.json", i);
    pool[i].save(ctx.out_path(name));
    files.push_back(name);
  }
  index["files"] = files;
  ctx.write_json_artifact("zoo.json", index);
}

void run_gen(RunContext& ctx) {
  Vocab vocab = vocab_from(ctx.cfg);
  std::vector<MarkovPolicy> pool = load_or_build_zoo(ctx, vocab);
  SamplingParams sampling = sampling_from(ctx.cfg);
  CleanConfig clean = clean_from(ctx.cfg);
  PromptSources sources = prompt_sources(ctx.cfg, vocab, ctx.seed);
  sources.prefix.validate(vocab);
  sources.instruct.validate(vocab);

  std::string kind = ctx.cfg.get_text("gen.kind", "pretrain");
  std::size_t n_train = static_cast<std::size_t>(ctx.cfg.get_int("gen.triples", 1000));
  std::size_t n_val = static_cast<std::size_t>(ctx.cfg.get_int("gen.val_triples", 100));

  DatasetMeta meta;
  meta.root_seed = ctx.seed;
  meta.policy_ids = policy_ids(pool);

  if (kind == "pretrain") {
    meta.kind = "policy-contrast-triples";
    auto train_set = make_pretrain_triples(sources, pool, sampling, clean,
                                           n_train, ctx.seed, kStreamTrain,
                                           ctx.workers);
    auto val_set = make_pretrain_triples(sources, pool, sampling, clean, n_val,
                                         ctx.seed, kStreamVal, ctx.workers);
    write_dataset(ctx.out_path("train.jsonl"), train_set, meta);
    ctx.outputs.push_back("train.jsonl.manifest.json");
    write_dataset(ctx.out_path("val.jsonl"), val_set, meta);
    ctx.outputs.push_back("val.jsonl.manifest.json");
  } else if (kind == "ranked") {
    meta.kind = "ranked-triples";
    double eps = ctx.cfg.get_real("gen.perturb_eps", 0.5);
    std::vector<RankedTriple> train_set(n_train), val_set(n_val);
    parallel_for(n_train, ctx.workers, [&](std::size_t i) {
      train_set[i] = make_ranked_triple(sources, pool, sampling, clean, eps,
                                        derive_seed(ctx.seed, kStreamTrain, i));
    });
    parallel_for(n_val, ctx.workers, [&](std::size_t i) {
      val_set[i] = make_ranked_triple(sources, pool, sampling, clean, eps,
                                      derive_seed(ctx.seed, kStreamVal, i));
    });
    write_ranked_dataset(ctx.out_path("train.jsonl"), train_set, meta);
    ctx.outputs.push_back("train.jsonl.manifest.json");
    write_ranked_dataset(ctx.out_path("val.jsonl"), val_set, meta);
    ctx.outputs.push_back("val.jsonl.manifest.json");
  } else if (kind == "eval") {
    std::vector<EvalItem> items(n_train);
    parallel_for(n_train, ctx.workers, [&](std::size_t i) {
      items[i] = make_eval_item(sources, pool, sampling, clean,
                                derive_seed(ctx.seed, kStreamTrain, i));
    });
    write_eval_dataset(ctx.out_path("eval.jsonl"), items);
  } else {
    fail("gen.kind must be pretrain, ranked or eval, got '", kind, "'");
  }
}

void run_pretrain(RunContext& ctx) {
  Vocab vocab = vocab_from(ctx.cfg);
  int max_seq = static_cast<int>(ctx.cfg.get_int("net.max_seq", 256));

  std::string train_path = ctx.cfg.get_text("pretrain.dataset");
  std::string val_path = ctx.cfg.get_text("pretrain.val_dataset");
  ctx.note_input(train_path);
  ctx.note_input(val_path);
  auto train_set = read_dataset(train_path);
  auto val_set = read_dataset(val_path);

  auto train_pairs = pack_pretrain(train_set, vocab, max_seq);
  auto val_pairs = pack_pretrain(val_set, vocab, max_seq);

  RewardNetConfig net = net_config_from(ctx.cfg, vocab, ctx.seed);
  OptimizerConfig opt = optimizer_from(ctx.cfg, "pretrain", ctx.seed);
  auto [params, report] = train_dispatch(net, train_pairs, val_pairs, opt,
                                         LossKind::pretrain_bt);

  save_checkpoint(ctx.out_path("checkpoint.bin"), params, ctx.seed);
  ctx.write_text_artifact("train_log.jsonl", train_log_lines(report));
  ctx.write_json_artifact("report.json", train_report_json(report));
}

void run_sft(RunContext& ctx) {
  Vocab vocab = vocab_from(ctx.cfg);
  int max_seq = static_cast<int>(ctx.cfg.get_int("net.max_seq", 256));

  std::string train_path = ctx.cfg.get_text("sft.dataset");
  std::string val_path = ctx.cfg.get_text("sft.val_dataset");
  std::string init_path = ctx.cfg.get_text("sft.init_checkpoint");
  ctx.note_input(train_path);
  ctx.note_input(val_path);
  ctx.note_input(init_path);

  auto train_set = read_ranked_dataset(train_path);
  auto val_set = read_ranked_dataset(val_path);
  auto train_pairs = pack_ranked(train_set, vocab, max_seq);
  auto val_pairs = pack_ranked(val_set, vocab, max_seq);

  Checkpoint ck = load_checkpoint(init_path);
  require(ck.config.vocab_total >= vocab.total(),
          "checkpoint vocab_total ", ck.config.vocab_total,
          " is too small for configured vocab total ", vocab.total());
  OptimizerConfig opt = optimizer_from(ctx.cfg, "sft", ctx.seed);
  auto [params, report] = train_dispatch(ck.config, train_pairs, val_pairs, opt,
                                         LossKind::sft_rank, &ck.flat);

  save_checkpoint(ctx.out_path("checkpoint.bin"), params, ctx.seed);
  ctx.write_text_artifact("train_log.jsonl", train_log_lines(report));
  ctx.write_json_artifact("report.json", train_report_json(report));
}

void run_eval(RunContext& ctx) {
  Vocab vocab = vocab_from(ctx.cfg);
  int max_seq = static_cast<int>(ctx.cfg.get_int("net.max_seq", 256));
  std::string data_path = ctx.cfg.get_text("eval.dataset");
  std::string ck_path = ctx.cfg.get_text("eval.checkpoint");
  ctx.note_input(data_path);
  ctx.note_input(ck_path);

  auto items = read_eval_dataset(data_path);
  Checkpoint ck = load_checkpoint(ck_path);
  NetScorer scorer(params_from_checkpoint<double>(ck), vocab, max_seq);
  EvalResult result = preference_accuracy(scorer, items, ctx.workers);

  ctx.write_json_artifact("eval.json", eval_report_json(result));
  ctx.write_text_artifact("eval.txt", eval_report_text(result));
}

MarkovPolicy policy_from_key(RunContext& ctx, const std::string& key,
                             const Vocab& vocab, std::uint64_t fallback_seed) {
  std::string path = ctx.cfg.get_text(key, "");
  if (path.empty()) {
    int order = static_cast<int>(ctx.cfg.get_int("zoo.order", 1));
    double spread = ctx.cfg.get_real("zoo.spread", 1.0);
    return make_markov_policy(order, vocab, fallback_seed, spread);
  }
  ctx.note_input(path);
  MarkovPolicy p = MarkovPolicy::load(path);
  require(p.vocab().size == vocab.size, "policy ", p.id(), " has vocab ",
          p.vocab().size, ", config says ", vocab.size);
  return p;
}

json curve_json(const std::vector<double>& v) { return json(v); }

void run_rft_stage(RunContext& ctx) {
  Vocab vocab = vocab_from(ctx.cfg);
  SamplingParams sampling = sampling_from(ctx.cfg);

  MarkovPolicy init = policy_from_key(ctx, "rft.init_policy", vocab,
                                      derive_seed(ctx.seed, kStreamInit));
  MarkovPolicy target = policy_from_key(ctx, "rft.target_policy", vocab,
                                        derive_seed(ctx.seed, kStreamTarget));

  RftConfig rft;
  rft.beta = ctx.cfg.get_real("rft.beta", 0.05);
  rft.lr = ctx.cfg.get_real("rft.lr", 0.5);
  rft.steps = static_cast<int>(ctx.cfg.get_int("rft.steps", 100));
  rft.rollouts = static_cast<int>(ctx.cfg.get_int("rft.rollouts", 16));
  rft.baseline = baseline_from_string(ctx.cfg.get_text("rft.baseline", "batch-mean"));
  rft.sampling = sampling;
  rft.validate();

  std::size_t n_prompts = static_cast<std::size_t>(ctx.cfg.get_int("rft.n_prompts", 4));
  require(n_prompts >= 1, "rft.n_prompts must be >= 1");
  PromptSources sources = prompt_sources(ctx.cfg, vocab, ctx.seed);
  std::vector<Tokens> prompts(n_prompts);
  for (std::size_t i = 0; i < n_prompts; ++i) {
    std::uint64_t s = derive_seed(ctx.seed, kStreamPrompt, i);
    prompts[i] = sample_prefix(sources.pick(s), s);
  }

  std::unique_ptr<RewardScorer> grader;
  std::string grader_kind = ctx.cfg.get_text("rft.grader", "implied");
  if (grader_kind == "implied") {
    grader = std::make_unique<ImpliedRewardScorer>(target, init, rft.beta);
  } else if (grader_kind == "net") {
    std::string ck_path = ctx.cfg.get_text("rft.checkpoint");
    ctx.note_input(ck_path);
    Checkpoint ck = load_checkpoint(ck_path);
    int max_seq = static_cast<int>(ctx.cfg.get_int("net.max_seq", 256));
    grader = std::make_unique<NetScorer>(params_from_checkpoint<double>(ck),
                                         vocab, max_seq);
  } else {
    fail("rft.grader must be implied or net, got '", grader_kind, "'");
  }

  ReferenceProvider references = [&target, &sampling](
                                     std::span<const Token> prompt,
                                     std::uint64_t seed) {
    Trajectory t = target.sample(prompt, sampling, seed);
    return Tokens(t.continuation().begin(), t.continuation().end());
  };

  MarkovPolicy policy = init;
  RftReport report = run_rft(policy, init, target, *grader, references, prompts,
                             rft, derive_seed(ctx.seed, kStreamRft));

  json curves;
  curves["initial_kl_to_target"] = report.initial_kl_to_target;
  curves["final_kl_to_target"] = report.final_kl_to_target;
  curves["mean_reward"] = curve_json(report.mean_reward);
  curves["mean_shaped"] = curve_json(report.mean_shaped);
  curves["kl_to_target"] = curve_json(report.kl_to_target);
  curves["kl_to_init"] = curve_json(report.kl_to_init);
  ctx.write_json_artifact("rft_curves.json", curves);
  policy.save(ctx.out_path("rft_policy.json"));

  if (ctx.cfg.get_bool("rft.sft_arm", false)) {
    std::size_t budget = static_cast<std::size_t>(rft.steps) * n_prompts *
                         static_cast<std::size_t>(rft.rollouts);
    std::vector<Trajectory> refs;
    refs.reserve(budget);
    for (std::size_t i = 0; i < budget; ++i) {
      const Tokens& prompt = prompts[i % n_prompts];
      refs.push_back(target.sample(prompt, sampling,
                                   derive_seed(ctx.seed, kStreamSftArm, i)));
    }

    double sft_lr = ctx.cfg.get_real("rft.sft_lr", 1.0);
    int sft_epochs = static_cast<int>(ctx.cfg.get_int("rft.sft_epochs", 50));
    MarkovPolicy arm = init;
    std::vector<double> ll_series, kl_series;
    kl_series.push_back(
        track_kl_to_target(arm, target, prompts, sampling.max_len));
    for (int e = 0; e < sft_epochs; ++e) {
      SftPolicyReport r = sft_policy(arm, refs, sft_lr, 1);
      if (e == 0) ll_series.push_back(r.epoch_log_likelihood.front());
      ll_series.push_back(r.epoch_log_likelihood.back());
      kl_series.push_back(
          track_kl_to_target(arm, target, prompts, sampling.max_len));
    }
    json sft_curves;
    sft_curves["reference_budget"] = budget;
    sft_curves["epoch_log_likelihood"] = curve_json(ll_series);
    sft_curves["kl_to_target"] = curve_json(kl_series);
    ctx.write_json_artifact("sft_curves.json", sft_curves);
    arm.save(ctx.out_path("sft_policy.json"));
  }
}

void run_scaling(RunContext& ctx) {
  Vocab vocab = vocab_from(ctx.cfg);
  int max_seq = static_cast<int>(ctx.cfg.get_int("net.max_seq", 256));

  std::vector<TrainTriple> train_set, val_set;
  std::string data_path = ctx.cfg.get_text("scaling.dataset", "");
  if (!data_path.empty()) {
    std::string val_path = ctx.cfg.get_text("scaling.val_dataset");
    ctx.note_input(data_path);
    ctx.note_input(val_path);
    train_set = read_dataset(data_path);
    val_set = read_dataset(val_path);
  } else {
    std::vector<MarkovPolicy> pool = load_or_build_zoo(ctx, vocab);
    SamplingParams sampling = sampling_from(ctx.cfg);
    CleanConfig clean = clean_from(ctx.cfg);
    PromptSources sources = prompt_sources(ctx.cfg, vocab, ctx.seed);
    std::size_t n_train =
        static_cast<std::size_t>(ctx.cfg.get_int("scaling.triples", 2000));
    std::size_t n_val =
        static_cast<std::size_t>(ctx.cfg.get_int("scaling.val_triples", 200));
    train_set = make_pretrain_triples(sources, pool, sampling, clean, n_train,
                                      ctx.seed, kStreamTrain, ctx.workers);
    val_set = make_pretrain_triples(sources, pool, sampling, clean, n_val,
                                    ctx.seed, kStreamVal, ctx.workers);
    DatasetMeta meta;
    meta.kind = "policy-contrast-triples";
    meta.root_seed = ctx.seed;
    meta.policy_ids = policy_ids(pool);
    write_dataset(ctx.out_path("train.jsonl"), train_set, meta);
    ctx.outputs.push_back("train.jsonl.manifest.json");
    write_dataset(ctx.out_path("val.jsonl"), val_set, meta);
    ctx.outputs.push_back("val.jsonl.manifest.json");
  }

  auto train_pairs = pack_pretrain(train_set, vocab, max_seq);
  auto val_pairs = pack_pretrain(val_set, vocab, max_seq);

  std::string dims_text = ctx.cfg.get_text("scaling.hidden_dims", "16,44,88,200");
  std::vector<int> dims;
  std::istringstream ds(dims_text);
  std::string part;
  while (std::getline(ds, part, ',')) {
    std::size_t used = 0;
    int h = 0;
    try {
      h = std::stoi(part, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == part.size() && h > 0,
            "scaling.hidden_dims entry '", part, "' is not a positive integer");
    dims.push_back(h);
  }
  require(dims.size() >= 2, "scaling.hidden_dims needs at least 2 sizes, got '",
          dims_text, "'");

  int embed = static_cast<int>(ctx.cfg.get_int("scaling.embed_dim", 16));
  OptimizerConfig opt;
  opt.kind = OptimizerKind::adaptive_moments;
  opt.lr = ctx.cfg.get_real("scaling.lr", 1e-3);
  opt.batch_size = static_cast<int>(ctx.cfg.get_int("scaling.batch_size", 32));
  opt.epochs = static_cast<int>(ctx.cfg.get_int("scaling.epochs", 1));
  opt.shuffle_seed = derive_seed(ctx.seed, kStreamShuffle);
  opt.validate();

  std::vector<LossPoint> points;
  json sizes = json::array();
  for (int h : dims) {
    RewardNetConfig net;
    net.vocab_total = vocab.total();
    net.embed_dim = embed;
    net.hidden_dim = h;
    net.encoder =
        encoder_from_string(ctx.cfg.get_text("net.encoder", "gated_recurrent"));
    net.precision = Precision::f64;
    net.init_seed = derive_seed(ctx.seed, kStreamNet, h);
    net.validate();

    auto [params, report] =
        train_dispatch(net, train_pairs, val_pairs, opt, LossKind::pretrain_bt);
    char log_name[48];
    std::snprintf(log_name, sizeof log_name, "train_log_h%d.jsonl", h);
    ctx.write_text_artifact(log_name, train_log_lines(report));

    double val_loss = report.epoch_val_losses.back();
    points.push_back({static_cast<double>(report.param_count), val_loss});
    json row;
    row["hidden_dim"] = h;
    row["n_params"] = report.param_count;
    row["val_loss"] = val_loss;
    row["estimated_compute"] = report.estimated_compute;
    sizes.push_back(row);
  }

  PowerLawFit fit = fit_power_law(points);
  json out;
  out["sizes"] = sizes;
  out["exponent"] = fit.exponent;
  out["coefficient"] = fit.coefficient;
  out["r_squared"] = fit.r_squared;
  out["n_points"] = fit.n_points;
  ctx.write_json_artifact("fit.json", out);
}

void run_grad_check(RunContext& ctx) {
  Vocab vocab = vocab_from(ctx.cfg);
  RewardNetConfig net = net_config_from(ctx.cfg, vocab, ctx.seed);
  require(net.precision == Precision::f64,
          "grad-check runs in f64 only; set net.precision = f64");
  NetParams<double> params = init_params<double>(net);

  std::size_t n_pairs = static_cast<std::size_t>(ctx.cfg.get_int("gradcheck.pairs", 4));
  double eps = ctx.cfg.get_real("gradcheck.eps", 1e-5);
  double tolerance = ctx.cfg.get_real("gradcheck.tolerance", 1e-5);
  int max_seq = static_cast<int>(ctx.cfg.get_int("net.max_seq", 256));

  auto random_tokens = [&](Rng& rng, int lo, int hi) {
    int len = lo + static_cast<int>(rng.below(hi - lo + 1));
    Tokens out(len);
    for (Token& t : out) t = static_cast<Token>(rng.below(vocab.size));
    return out;
  };

  json checks = json::array();
  double max_err = 0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    Rng rng(derive_seed(ctx.seed, kStreamGradCheck, i));
    Tokens prompt = random_tokens(rng, 1, 4);
    Tokens reference = random_tokens(rng, 1, 8);
    Tokens pos = random_tokens(rng, 1, 8);
    Tokens neg = random_tokens(rng, 1, 8);
    PackedPair pair;
    pair.pos = pack_example(prompt, reference, pos, vocab, max_seq);
    pair.neg = pack_example(prompt, reference, neg, vocab, max_seq);
    pair.source_index = i;

    for (LossKind kind : {LossKind::pretrain_bt, LossKind::sft_rank}) {
      FiniteDiffReport r = finite_diff_check(params, pair, kind, eps);
      json row;
      row["pair"] = i;
      row["loss_kind"] = kind == LossKind::pretrain_bt ? "pretrain_bt" : "sft_rank";
      row["max_err"] = r.max_err;
      row["worst_param"] = r.worst_name;
      checks.push_back(row);
      max_err = std::max(max_err, r.max_err);
    }
  }

  json out;
  out["param_count"] = params.flat.size();
  out["eps"] = eps;
  out["tolerance"] = tolerance;
  out["max_err"] = max_err;
  out["checks"] = checks;
  ctx.write_json_artifact("gradcheck.json", out);
  require(max_err < tolerance, "gradient check failed: max error ", max_err,
          " is not below tolerance ", tolerance);
}

std::string utc_stamp() {
  std::time_t now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

}  // namespace

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names = {
      "zoo", "gen", "pretrain", "sft", "eval",
      "rft", "scaling", "grad-check", "verify"};
  return names;
}

RunOutcome run_subcommand(const RunOptions& opts) {
  RunOutcome out;
  const auto& names = subcommand_names();
  if (std::find(names.begin(), names.end(), opts.subcommand) == names.end()) {
    out.status = 1;
    out.message = "unknown subcommand '" + opts.subcommand + "'";
    return out;
  }

  if (opts.subcommand == "verify") {
    try {
      require(!opts.target_dir.empty(), "verify needs a run directory (--dir)");
      std::vector<std::string> problems = verify_run_dir(opts.target_dir);
      if (problems.empty()) {
        out.message = "ok: all hashes match";
      } else {
        std::ostringstream os;
        for (const std::string& p : problems) os << p << "\n";
        out.message = os.str();
        out.status = 1;
      }
    } catch (const std::exception& e) {
      out.status = 1;
      out.message = e.what();
    }
    return out;
  }

  RunContext ctx;
  try {
    ctx.cfg = opts.config_path.empty() ? Config()
                                       : Config::from_file(opts.config_path);
    for (const std::string& ov : opts.overrides) ctx.cfg.apply_override(ov);
    ctx.workers = std::max<std::size_t>(1, opts.workers);
    ctx.seed = static_cast<std::uint64_t>(ctx.cfg.get_int("run.seed", 42));

    std::string base = utc_stamp() + "-" + opts.subcommand + "-" +
                       ctx.cfg.content_hash().substr(0, 8);
    fs::path dir = opts.run_root / base;
    for (int n = 1; fs::exists(dir); ++n)
      dir = opts.run_root / (base + "-" + std::to_string(n));
    fs::create_directories(dir);
    ctx.dir = dir;
    out.run_dir = dir;

    if (!opts.config_path.empty()) ctx.note_input(opts.config_path);

    auto t0 = std::chrono::steady_clock::now();
    if (opts.subcommand == "zoo") run_zoo(ctx);
    else if (opts.subcommand == "gen") run_gen(ctx);
    else if (opts.subcommand == "pretrain") run_pretrain(ctx);
    else if (opts.subcommand == "sft") run_sft(ctx);
    else if (opts.subcommand == "eval") run_eval(ctx);
    else if (opts.subcommand == "rft") run_rft_stage(ctx);
    else if (opts.subcommand == "scaling") run_scaling(ctx);
    else run_grad_check(ctx);
    double wall = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0).count();

    RunManifest manifest;
    manifest.subcommand = opts.subcommand;
    manifest.config = ctx.cfg.consumed();
    manifest.root_seed = ctx.seed;
    manifest.input_hashes = ctx.input_hashes;
    for (const std::string& rel : ctx.outputs)
      manifest.output_hashes[rel] = file_hash_hex(ctx.dir / rel);
    manifest.wall_clock_sec = wall;
    write_manifest(ctx.dir, manifest);
    out.message = "ok: " + ctx.dir.string();
  } catch (const std::exception& e) {
    out.status = 1;
    out.message = e.what();
    if (!ctx.dir.empty()) {
      json marker;
      marker["error"] = std::string(e.what());
      marker["subcommand"] = opts.subcommand;
      try {
        write_file_atomic(ctx.dir / "failed.json", marker.dump(2) + "\n");
      } catch (...) {
        // the marker is best effort; the nonzero status already reports
      }
    }
  }
  return out;
}

}  // namespace rmlab
