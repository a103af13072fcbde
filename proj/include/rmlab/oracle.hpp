#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rmlab/policy.hpp"

namespace rmlab {

class RewardScorer;

// Hard ceiling on exact-enumeration size (vocab_size ^ horizon).
inline constexpr std::size_t kEnumerationCap = std::size_t(1) << 20;

std::size_t enumeration_count(const Vocab& vocab, int horizon);

// Every content-token continuation of length `horizon`, lexicographic.
std::vector<Tokens> enumerate_trajectories(const Vocab& vocab, int horizon);

// KL(p || q) in nats over all length-`horizon` continuations of `prompt`.
double exact_kl(const MarkovPolicy& p, const MarkovPolicy& q,
                std::span<const Token> prompt, int horizon);

using TrajectoryReward = std::function<double(
    std::span<const Token> prompt, std::span<const Token> continuation)>;

// Exact Gibbs reweighting of `init` by exp(reward / beta), tabulated over the
// full enumeration. probs[i] aligns with enumerate_trajectories order.
struct OptimalPolicyTable {
  Tokens prompt;
  int horizon = 0;
  double beta = 0;
  std::vector<double> probs;
  double partition = 0;  // sum_tau init(tau) * exp(reward(tau) / beta)
};

OptimalPolicyTable optimal_policy(const MarkovPolicy& init,
                                  const TrajectoryReward& reward, double beta,
                                  std::span<const Token> prompt, int horizon);

// beta * (log target(continuation | prompt) - log init(continuation | prompt)).
// The additive beta * log Z(prompt) constant is dropped.
double implied_reward(const MarkovPolicy& target, const MarkovPolicy& init,
                      double beta, std::span<const Token> prompt,
                      std::span<const Token> continuation);

struct MonteCarloEstimate {
  double mean = 0;
  double std_error = 0;
  std::size_t n = 0;
};

using PromptSampler = std::function<Tokens(std::uint64_t seed)>;
using ReferenceProvider =
    std::function<Tokens(std::span<const Token> prompt, std::uint64_t seed)>;

// Monte-Carlo mean of rm(prompt, reference, candidate) with candidates drawn
// from `policy`. Per-sample seeds are derived, so the estimate is independent
// of evaluation order.
MonteCarloEstimate expected_reward_under(
    const MarkovPolicy& policy, const RewardScorer& rm,
    const ReferenceProvider& references, const PromptSampler& prompts,
    const SamplingParams& params, std::size_t n_samples, std::uint64_t seed);

}  // namespace rmlab
