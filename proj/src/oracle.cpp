#include "rmlab/oracle.hpp"

#include <cmath>
#include <limits>

#include "rmlab/error.hpp"
#include "rmlab/rng.hpp"
#include "rmlab/scorer.hpp"

namespace rmlab {

std::size_t enumeration_count(const Vocab& vocab, int horizon) {
  vocab.validate();
  require(horizon >= 0, "enumerate: horizon must be >= 0, got ", horizon);
  std::size_t count = 1;
  for (int i = 0; i < horizon; ++i) {
    require(count <= kEnumerationCap / vocab.size,
            "enumerate: ", vocab.size, "^", horizon, " exceeds the enumeration cap ",
            kEnumerationCap);
    count *= vocab.size;
  }
  return count;
}

std::vector<Tokens> enumerate_trajectories(const Vocab& vocab, int horizon) {
  const std::size_t count = enumeration_count(vocab, horizon);
  std::vector<Tokens> out;
  out.reserve(count);
  Tokens cur(horizon, 0);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(cur);
    for (int pos = horizon - 1; pos >= 0; --pos) {
      if (++cur[pos] < vocab.size) break;
      cur[pos] = 0;
    }
  }
  return out;
}

namespace {

// Depth-first walk over the continuation tree accumulating log-probs under
// both policies; visits each continuation exactly once in lexicographic order.
struct KlWalker {
  const MarkovPolicy& p;
  const MarkovPolicy& q;
  int horizon;
  Tokens buf;
  double kl = 0;

  void walk(int depth, double lp, double lq) {
    if (depth == horizon) {
      kl += std::exp(lp) * (lp - lq);
      return;
    }
    const std::vector<double> dp = p.next_token_dist(buf);
    const std::vector<double> dq = q.next_token_dist(buf);
    for (Token t = 0; t < p.vocab().size; ++t) {
      buf.push_back(t);
      walk(depth + 1, lp + std::log(dp[t]), lq + std::log(dq[t]));
      buf.pop_back();
    }
  }
};

}  // namespace

double exact_kl(const MarkovPolicy& p, const MarkovPolicy& q,
                std::span<const Token> prompt, int horizon) {
  require(p.vocab().size == q.vocab().size,
          "exact_kl: policies disagree on vocab size (", p.vocab().size, " vs ",
          q.vocab().size, ")");
  enumeration_count(p.vocab(), horizon);
  for (Token t : prompt)
    require(p.vocab().is_content(t), "exact_kl: prompt token ", t,
            " is not a content token");
  KlWalker w{p, q, horizon, Tokens(prompt.begin(), prompt.end()), 0.0};
  w.walk(0, 0.0, 0.0);
  return w.kl;
}

OptimalPolicyTable optimal_policy(const MarkovPolicy& init,
                                  const TrajectoryReward& reward, double beta,
                                  std::span<const Token> prompt, int horizon) {
  require(beta > 0.0, "optimal_policy: beta must be positive, got ", beta);
  const std::vector<Tokens> all = enumerate_trajectories(init.vocab(), horizon);

  OptimalPolicyTable table;
  table.prompt.assign(prompt.begin(), prompt.end());
  table.horizon = horizon;
  table.beta = beta;
  table.probs.resize(all.size());

  std::vector<double> log_w(all.size());
  double max_lw = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < all.size(); ++i) {
    Trajectory traj;
    traj.tokens.assign(prompt.begin(), prompt.end());
    traj.tokens.insert(traj.tokens.end(), all[i].begin(), all[i].end());
    traj.prompt_len = static_cast<int>(prompt.size());
    const double r = reward(prompt, all[i]);
    require(std::isfinite(r), "optimal_policy: reward is not finite for entry ", i);
    log_w[i] = init.log_prob(traj) + r / beta;
    max_lw = std::max(max_lw, log_w[i]);
  }
  double sum = 0.0;
  for (double lw : log_w) sum += std::exp(lw - max_lw);
  const double log_z = max_lw + std::log(sum);
  for (std::size_t i = 0; i < all.size(); ++i)
    table.probs[i] = std::exp(log_w[i] - log_z);
  table.partition = std::exp(log_z);
  return table;
}

double implied_reward(const MarkovPolicy& target, const MarkovPolicy& init,
                      double beta, std::span<const Token> prompt,
                      std::span<const Token> continuation) {
  require(beta > 0.0, "implied_reward: beta must be positive, got ", beta);
  Trajectory traj;
  traj.tokens.assign(prompt.begin(), prompt.end());
  traj.tokens.insert(traj.tokens.end(), continuation.begin(), continuation.end());
  traj.prompt_len = static_cast<int>(prompt.size());
  return beta * (target.log_prob(traj) - init.log_prob(traj));
}

MonteCarloEstimate expected_reward_under(
    const MarkovPolicy& policy, const RewardScorer& rm,
    const ReferenceProvider& references, const PromptSampler& prompts,
    const SamplingParams& params, std::size_t n_samples, std::uint64_t seed) {
  require(n_samples >= 1, "expected_reward_under: n_samples must be >= 1");
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const std::uint64_t s = derive_seed(seed, i);
    const Tokens prompt = prompts(derive_seed(s, 0));
    const Tokens ref = references(prompt, derive_seed(s, 1));
    const Trajectory traj = policy.sample(prompt, params, derive_seed(s, 2));
    const double r = rm.score(prompt, ref, traj.continuation());
    require(std::isfinite(r), "expected_reward_under: non-finite score at sample ", i);
    const double delta = r - mean;
    mean += delta / static_cast<double>(i + 1);
    m2 += delta * (r - mean);
  }
  MonteCarloEstimate est;
  est.mean = mean;
  est.n = n_samples;
  est.std_error =
      n_samples > 1
          ? std::sqrt(m2 / static_cast<double>(n_samples - 1) /
                      static_cast<double>(n_samples))
          : 0.0;
  return est;
}

}  // namespace rmlab
