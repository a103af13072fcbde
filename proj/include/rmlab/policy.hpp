#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rmlab {

using Token = std::int32_t;
using Tokens = std::vector<Token>;

// Content tokens are ids [0, size); the four reserved ids sit at or above
// `size` and never appear inside trajectories.
struct Vocab {
  int size = 0;
  Token pad = -1;
  Token bos = -1;
  Token split = -1;
  Token reward = -1;

  // Reserved ids packed directly after the content range.
  static Vocab with_content(int size);

  // Smallest embedding-table size that covers every id.
  int total() const;

  bool is_content(Token t) const { return t >= 0 && t < size; }
  void validate() const;
};

struct SamplingParams {
  double temperature = 1.0;
  double top_p = 0.9;
  int top_k = 50;    // clamped to the vocab size at use
  int max_len = 32;  // continuation token budget

  void validate() const;
};

struct Trajectory {
  Tokens tokens;  // prompt followed by continuation
  int prompt_len = 0;
  std::string source_policy;

  std::span<const Token> prompt() const {
    return std::span<const Token>(tokens).first(prompt_len);
  }
  std::span<const Token> continuation() const {
    return std::span<const Token>(tokens).subspan(prompt_len);
  }
};

std::vector<double> softmax(std::span<const double> logits);

// Order-k Markov policy with one softmax row per BOS-padded length-k context.
// Distributions are exact, which is what makes the enumeration oracles and
// closed-form round-trip checks downstream possible.
class MarkovPolicy {
 public:
  MarkovPolicy() = default;
  MarkovPolicy(std::string id, int order, const Vocab& vocab,
               std::vector<double> logits);

  // Logits i.i.d. gaussian scaled by `spread`; spread 0 gives the uniform
  // policy. Bit-identical output for identical arguments.
  static MarkovPolicy make(int order, const Vocab& vocab, std::uint64_t seed,
                           double spread, std::string id = "");

  const std::string& id() const { return id_; }
  int order() const { return order_; }
  const Vocab& vocab() const { return vocab_; }
  const std::vector<double>& logits() const { return logits_; }
  std::vector<double>& mutable_logits() { return logits_; }
  std::size_t rows() const { return logits_.size() / vocab_.size; }

  // Row for the context formed by the last `order` tokens of `history`,
  // BOS-padded on the left when the history is shorter than the order.
  std::size_t row_index(std::span<const Token> history) const;

  std::vector<double> next_token_dist(std::span<const Token> history) const;

  // Temperature, then top-k, then top-p (sorted by probability descending,
  // token id ascending; the cut includes the first token reaching mass
  // >= top_p), renormalize, sample. Fixed horizon: exactly max_len
  // continuation tokens.
  Trajectory sample(std::span<const Token> prompt, const SamplingParams& params,
                    std::uint64_t seed) const;

  // Sum of log probabilities of the continuation given everything before it.
  double log_prob(const Trajectory& traj) const;

  MarkovPolicy perturbed(double epsilon, std::uint64_t seed) const;

  void save(const std::filesystem::path& path) const;
  static MarkovPolicy load(const std::filesystem::path& path);

 private:
  std::string id_;
  int order_ = 0;
  Vocab vocab_;
  std::vector<double> logits_;  // rows x size, row-major
};

inline MarkovPolicy make_markov_policy(int order, const Vocab& vocab,
                                       std::uint64_t seed, double spread,
                                       std::string id = "") {
  return MarkovPolicy::make(order, vocab, seed, spread, std::move(id));
}

inline Trajectory sample_trajectory(const MarkovPolicy& policy,
                                    std::span<const Token> prompt,
                                    const SamplingParams& params,
                                    std::uint64_t seed) {
  return policy.sample(prompt, params, seed);
}

inline double trajectory_log_prob(const MarkovPolicy& policy,
                                  const Trajectory& traj) {
  return policy.log_prob(traj);
}

inline MarkovPolicy perturb_policy(const MarkovPolicy& policy, double epsilon,
                                   std::uint64_t seed) {
  return policy.perturbed(epsilon, seed);
}

}  // namespace rmlab
