#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rmlab/oracle.hpp"
#include "rmlab/policy.hpp"
#include "rmlab/scorer.hpp"

namespace rmlab {

enum class RftBaseline { none, batch_mean };

RftBaseline baseline_from_string(const std::string& s);
std::string to_string(RftBaseline b);

struct RftConfig {
  double beta = 0.05;  // weight of the log-ratio penalty folded into the reward
  double lr = 0.5;
  int steps = 500;
  int rollouts = 16;  // per prompt per step
  RftBaseline baseline = RftBaseline::batch_mean;
  SamplingParams sampling;  // rollout sampling; max_len is the horizon

  void validate() const;
};

struct RftStepStats {
  double mean_reward = 0;   // raw scorer output
  double mean_shaped = 0;   // reward minus beta * (log pi - log pi_init)
};

// Adds weight * d log pi(continuation | prompt) / d logits to `grad`, which
// must have policy.logits().size() entries. Per visited row the partial w.r.t.
// logit b is (1 if b was taken else 0) minus the row probability of b.
void add_log_prob_grad(const MarkovPolicy& policy, const Trajectory& traj,
                       double weight, std::span<double> grad);

// One score-function gradient ascent step on the shaped objective. Rollout
// log-ratios are computed against the frozen `init` policy; the gradient of
// log pi over the rollout tokens is exact for the tabular policy.
RftStepStats rft_step(MarkovPolicy& policy, const MarkovPolicy& init,
                      const RewardScorer& rm, const ReferenceProvider& references,
                      std::span<const Tokens> prompts, const RftConfig& cfg,
                      std::uint64_t step_seed);

// Mean exact KL(policy || target) over the prompts at the given horizon.
double track_kl_to_target(const MarkovPolicy& policy, const MarkovPolicy& target,
                          std::span<const Tokens> prompts, int horizon);

struct RftReport {
  std::vector<double> mean_reward;
  std::vector<double> mean_shaped;
  std::vector<double> kl_to_target;  // after each step
  std::vector<double> kl_to_init;
  double initial_kl_to_target = 0;
  double final_kl_to_target = 0;
};

RftReport run_rft(MarkovPolicy& policy, const MarkovPolicy& init,
                  const MarkovPolicy& target, const RewardScorer& rm,
                  const ReferenceProvider& references,
                  std::span<const Tokens> prompts, const RftConfig& cfg,
                  std::uint64_t seed);

struct SftPolicyReport {
  std::vector<double> epoch_log_likelihood;  // mean log pi(ref | prompt)
};

// Full-batch gradient ascent on the mean reference log-likelihood.
SftPolicyReport sft_policy(MarkovPolicy& policy,
                           std::span<const Trajectory> references, double lr,
                           int epochs);

}  // namespace rmlab
