#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rmlab/policy.hpp"

namespace rmlab {

// Stand-in pre-training corpus: token sequences that prompts are cut from.
// With whole_text set, sampling returns entire texts (instruction-style
// prompts); otherwise a uniform-length prefix from [min_prefix, max_prefix].
struct PromptSource {
  std::vector<Tokens> texts;
  int min_prefix = 1;
  int max_prefix = 16;
  bool whole_text = false;

  void validate(const Vocab& vocab) const;

  static PromptSource random(const Vocab& vocab, std::size_t n_texts,
                             int text_len, int min_prefix, int max_prefix,
                             std::uint64_t seed, bool whole_text = false);
};

Tokens sample_prefix(const PromptSource& source, std::uint64_t seed);

struct CleanConfig {
  int repeat_window = 4;
  int max_repeats = 2;
  int max_len = 32;

  void validate() const;
};

// Truncate to max_len, then collapse back-to-back block repetitions: for every
// window width w <= repeat_window, a block repeating more than max_repeats
// times in a row is cut down to exactly max_repeats copies. Passes iterate to
// a fixpoint, which makes the operation idempotent.
Tokens clean_trajectory(std::span<const Token> tokens, const CleanConfig& cfg);

// Brute-force detector used to validate the cleaner.
bool has_excess_repeats(std::span<const Token> tokens, int repeat_window,
                        int max_repeats);

struct TrainTriple {
  Tokens prompt;
  Tokens reference;  // continuation from policy A
  Tokens positive;   // second continuation from policy A
  Tokens negative;   // continuation from policy B
  std::string policy_a;
  std::string policy_b;
};

struct RankedTriple {
  Tokens prompt;
  Tokens best;
  Tokens middle;
  Tokens worst;
};

// Draws an ordered pair of distinct policies uniformly, samples one prompt and
// three cleaned continuations. Fully determined by `seed`.
TrainTriple build_pretrain_triple(const PromptSource& source,
                                  std::span<const MarkovPolicy> pool,
                                  const SamplingParams& params,
                                  const CleanConfig& clean, std::uint64_t seed);

struct DatasetMeta {
  std::string kind;
  std::uint64_t root_seed = 0;
  std::vector<std::string> policy_ids;
};

// Line-delimited records plus a sidecar manifest (<path>.manifest.json) with
// counts, provenance and a content hash. Readers validate schema and tokens
// and report failures by line number.
void write_dataset(const std::filesystem::path& path,
                   std::span<const TrainTriple> triples, const DatasetMeta& meta);
std::vector<TrainTriple> read_dataset(const std::filesystem::path& path);

void write_ranked_dataset(const std::filesystem::path& path,
                          std::span<const RankedTriple> triples,
                          const DatasetMeta& meta);
std::vector<RankedTriple> read_ranked_dataset(const std::filesystem::path& path);

}  // namespace rmlab
