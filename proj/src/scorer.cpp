#include "rmlab/scorer.hpp"

#include "rmlab/error.hpp"
#include "rmlab/oracle.hpp"
#include "rmlab/packing.hpp"
#include "rmlab/rng.hpp"

namespace rmlab {

NetScorer::NetScorer(NetParams<double> params, Vocab vocab, int max_seq)
    : params_(std::move(params)), vocab_(vocab), max_seq_(max_seq) {
  vocab_.validate();
  require(vocab_.total() <= params_.config.vocab_total,
          "net scorer: vocab needs ", vocab_.total(),
          " embedding rows but the net has ", params_.config.vocab_total);
}

double NetScorer::score(std::span<const Token> prompt,
                        std::span<const Token> reference,
                        std::span<const Token> candidate) const {
  return forward(params_,
                 pack_example(prompt, reference, candidate, vocab_, max_seq_));
}

ImpliedRewardScorer::ImpliedRewardScorer(MarkovPolicy target, MarkovPolicy init,
                                         double beta)
    : target_(std::move(target)), init_(std::move(init)), beta_(beta) {
  require(beta_ > 0.0, "implied scorer: beta must be positive, got ", beta_);
}

double ImpliedRewardScorer::score(std::span<const Token> prompt,
                                  std::span<const Token>,
                                  std::span<const Token> candidate) const {
  return implied_reward(target_, init_, beta_, prompt, candidate);
}

double HashCoinScorer::score(std::span<const Token> prompt,
                             std::span<const Token> reference,
                             std::span<const Token> candidate) const {
  std::uint64_t h = mix64(seed_);
  auto absorb = [&](std::span<const Token> seq) {
    h = mix64(h ^ (0x9e3779b97f4a7c15ULL + seq.size()));
    for (Token t : seq) h = mix64(h ^ static_cast<std::uint64_t>(t));
  };
  absorb(prompt);
  absorb(reference);
  absorb(candidate);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace rmlab
