#pragma once

#include <cstdint>
#include <span>

#include "rmlab/policy.hpp"
#include "rmlab/reward_net.hpp"

namespace rmlab {

// Reference-conditioned reward: higher means the candidate looks more like a
// sample of whatever policy produced the reference.
class RewardScorer {
 public:
  virtual ~RewardScorer() = default;
  virtual double score(std::span<const Token> prompt,
                       std::span<const Token> reference,
                       std::span<const Token> candidate) const = 0;
};

// Learned scorer: packs the (prompt, reference, candidate) comparison and runs
// the reward net.
class NetScorer : public RewardScorer {
 public:
  NetScorer(NetParams<double> params, Vocab vocab, int max_seq = 256);
  double score(std::span<const Token> prompt, std::span<const Token> reference,
               std::span<const Token> candidate) const override;
  const NetParams<double>& params() const { return params_; }

 private:
  NetParams<double> params_;
  Vocab vocab_;
  int max_seq_;
};

// Exact scorer: beta * (log target(candidate) - log init(candidate)). Ignores
// the reference argument; the target policy plays that role.
class ImpliedRewardScorer : public RewardScorer {
 public:
  ImpliedRewardScorer(MarkovPolicy target, MarkovPolicy init, double beta);
  double score(std::span<const Token> prompt, std::span<const Token> reference,
               std::span<const Token> candidate) const override;

 private:
  MarkovPolicy target_;
  MarkovPolicy init_;
  double beta_;
};

class ConstantScorer : public RewardScorer {
 public:
  explicit ConstantScorer(double value) : value_(value) {}
  double score(std::span<const Token>, std::span<const Token>,
               std::span<const Token>) const override {
    return value_;
  }

 private:
  double value_;
};

// Deterministic pseudo-random score in [0, 1) from a seeded hash of the item;
// a calibrated coin for harness null tests.
class HashCoinScorer : public RewardScorer {
 public:
  explicit HashCoinScorer(std::uint64_t seed) : seed_(seed) {}
  double score(std::span<const Token> prompt, std::span<const Token> reference,
               std::span<const Token> candidate) const override;

 private:
  std::uint64_t seed_;
};

}  // namespace rmlab
