#include "rmlab/rft.hpp"

#include <cmath>

#include "rmlab/error.hpp"
#include "rmlab/rng.hpp"

namespace rmlab {

RftBaseline baseline_from_string(const std::string& s) {
  if (s == "none") return RftBaseline::none;
  if (s == "batch-mean" || s == "batch_mean") return RftBaseline::batch_mean;
  fail("unknown baseline '", s, "' (expected none or batch-mean)");
}

std::string to_string(RftBaseline b) {
  return b == RftBaseline::none ? "none" : "batch-mean";
}

void RftConfig::validate() const {
  require(beta >= 0, "rft beta must be >= 0, got ", beta);
  require(lr > 0, "rft lr must be > 0, got ", lr);
  require(steps >= 1, "rft steps must be >= 1, got ", steps);
  require(rollouts >= 1, "rft rollouts must be >= 1, got ", rollouts);
  sampling.validate();
}

void add_log_prob_grad(const MarkovPolicy& policy, const Trajectory& traj,
                       double weight, std::span<double> grad) {
  require(grad.size() == policy.logits().size(),
          "gradient buffer size mismatch: ", grad.size(), " vs ",
          policy.logits().size());
  const int size = policy.vocab().size;
  std::span<const Token> all(traj.tokens);
  for (std::size_t t = traj.prompt_len; t < all.size(); ++t) {
    std::size_t row = policy.row_index(all.first(t));
    std::span<const double> row_logits(policy.logits().data() + row * size,
                                       static_cast<std::size_t>(size));
    std::vector<double> probs = softmax(row_logits);
    double* g = grad.data() + row * size;
    for (int b = 0; b < size; ++b) g[b] -= weight * probs[b];
    g[all[t]] += weight;
  }
}

RftStepStats rft_step(MarkovPolicy& policy, const MarkovPolicy& init,
                      const RewardScorer& rm, const ReferenceProvider& references,
                      std::span<const Tokens> prompts, const RftConfig& cfg,
                      std::uint64_t step_seed) {
  cfg.validate();
  require(!prompts.empty(), "rft step needs at least one prompt");

  const std::size_t total = prompts.size() * static_cast<std::size_t>(cfg.rollouts);
  std::vector<Trajectory> rolls;
  rolls.reserve(total);
  std::vector<double> shaped(total), raw(total);

  std::size_t idx = 0;
  for (const Tokens& prompt : prompts) {
    for (int j = 0; j < cfg.rollouts; ++j, ++idx) {
      std::uint64_t s = derive_seed(step_seed, idx);
      Trajectory traj = policy.sample(prompt, cfg.sampling, derive_seed(s, 0));
      Tokens ref = references(prompt, derive_seed(s, 1));
      double r = rm.score(prompt, ref, traj.continuation());
      double log_ratio = policy.log_prob(traj) - init.log_prob(traj);
      raw[idx] = r;
      shaped[idx] = r - cfg.beta * log_ratio;
      rolls.push_back(std::move(traj));
    }
  }

  double baseline = 0;
  if (cfg.baseline == RftBaseline::batch_mean) {
    for (double v : shaped) baseline += v;
    baseline /= static_cast<double>(total);
  }

  std::vector<double> grad(policy.logits().size(), 0.0);
  double inv_n = 1.0 / static_cast<double>(total);
  for (std::size_t i = 0; i < total; ++i)
    add_log_prob_grad(policy, rolls[i], (shaped[i] - baseline) * inv_n, grad);

  std::vector<double>& logits = policy.mutable_logits();
  for (std::size_t i = 0; i < logits.size(); ++i)
    logits[i] += cfg.lr * grad[i];

  RftStepStats stats;
  for (std::size_t i = 0; i < total; ++i) {
    stats.mean_reward += raw[i];
    stats.mean_shaped += shaped[i];
  }
  stats.mean_reward *= inv_n;
  stats.mean_shaped *= inv_n;
  return stats;
}

double track_kl_to_target(const MarkovPolicy& policy, const MarkovPolicy& target,
                          std::span<const Tokens> prompts, int horizon) {
  require(!prompts.empty(), "kl tracking needs at least one prompt");
  double sum = 0;
  for (const Tokens& prompt : prompts)
    sum += exact_kl(policy, target, prompt, horizon);
  return sum / static_cast<double>(prompts.size());
}

RftReport run_rft(MarkovPolicy& policy, const MarkovPolicy& init,
                  const MarkovPolicy& target, const RewardScorer& rm,
                  const ReferenceProvider& references,
                  std::span<const Tokens> prompts, const RftConfig& cfg,
                  std::uint64_t seed) {
  cfg.validate();
  int horizon = cfg.sampling.max_len;

  RftReport report;
  report.initial_kl_to_target = track_kl_to_target(policy, target, prompts, horizon);
  report.mean_reward.reserve(cfg.steps);
  report.mean_shaped.reserve(cfg.steps);
  report.kl_to_target.reserve(cfg.steps);
  report.kl_to_init.reserve(cfg.steps);

  for (int step = 0; step < cfg.steps; ++step) {
    RftStepStats stats = rft_step(policy, init, rm, references, prompts, cfg,
                                  derive_seed(seed, 0x73746570, step));
    report.mean_reward.push_back(stats.mean_reward);
    report.mean_shaped.push_back(stats.mean_shaped);
    report.kl_to_target.push_back(
        track_kl_to_target(policy, target, prompts, horizon));
    report.kl_to_init.push_back(track_kl_to_target(policy, init, prompts, horizon));
  }

  report.final_kl_to_target = report.kl_to_target.back();
  return report;
}

SftPolicyReport sft_policy(MarkovPolicy& policy,
                           std::span<const Trajectory> references, double lr,
                           int epochs) {
  require(!references.empty(), "sft needs at least one reference trajectory");
  require(lr > 0, "sft lr must be > 0, got ", lr);
  require(epochs >= 1, "sft epochs must be >= 1, got ", epochs);

  auto mean_ll = [&] {
    double sum = 0;
    for (const Trajectory& t : references) sum += policy.log_prob(t);
    return sum / static_cast<double>(references.size());
  };

  SftPolicyReport report;
  report.epoch_log_likelihood.reserve(epochs + 1);
  report.epoch_log_likelihood.push_back(mean_ll());

  double inv_n = 1.0 / static_cast<double>(references.size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::vector<double> grad(policy.logits().size(), 0.0);
    for (const Trajectory& t : references)
      add_log_prob_grad(policy, t, inv_n, grad);
    std::vector<double>& logits = policy.mutable_logits();
    for (std::size_t i = 0; i < logits.size(); ++i)
      logits[i] += lr * grad[i];
    report.epoch_log_likelihood.push_back(mean_ll());
  }
  return report;
}

}  // namespace rmlab
