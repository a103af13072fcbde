#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rmlab/corpus.hpp"
#include "rmlab/reward_net.hpp"

namespace rmlab {

// Contrastive objective: reward of the same-policy continuation vs the
// other-policy continuation, both conditioned on the same reference.
inline double bt_pretrain_loss(double r_pos, double r_neg) {
  return pair_logistic_loss(r_pos - r_neg);
}

// Ranking objective: reward of the higher-ranked continuation vs the
// lower-ranked one, conditioned on the top-ranked reference.
inline double sft_rank_loss(double r_better, double r_worse) {
  return pair_logistic_loss(r_better - r_worse);
}

enum class OptimizerKind { sgd, adaptive_moments };

OptimizerKind optimizer_from_string(const std::string& s);
std::string to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adaptive_moments;
  double lr = 1e-3;
  int batch_size = 32;
  int epochs = 1;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  std::uint64_t shuffle_seed = 0;

  void validate() const;
};

struct TrainReport {
  std::vector<double> step_losses;
  std::vector<std::uint64_t> step_tokens;  // cumulative tokens after each step
  std::vector<double> epoch_val_losses;
  std::uint64_t tokens_consumed = 0;
  std::size_t param_count = 0;
  double estimated_compute = 0;  // 6 * params * tokens
  double wall_clock_sec = 0;
};

// Mini-batch training over pre-packed comparison pairs. Shuffles with a
// per-epoch derived seed, walks batches in permutation order, aborts on a
// non-finite loss naming the step and the offending source rows.
template <class Real>
TrainReport train(NetParams<Real>& params, std::span<const PackedPair> train_pairs,
                  std::span<const PackedPair> val_pairs,
                  const OptimizerConfig& opt, LossKind kind);

template <class Real>
double validation_loss(const NetParams<Real>& params,
                       std::span<const PackedPair> pairs, LossKind kind);

// Stage-level packing: one comparison pair per triple.
std::vector<PackedPair> pack_pretrain(std::span<const TrainTriple> triples,
                                      const Vocab& vocab, int max_seq);
// One comparison pair per ranked triple: middle vs worst candidates, both
// conditioned on the best continuation as reference.
std::vector<PackedPair> pack_ranked(std::span<const RankedTriple> triples,
                                    const Vocab& vocab, int max_seq);

}  // namespace rmlab
