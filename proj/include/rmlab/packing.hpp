#pragma once

#include <span>

#include "rmlab/policy.hpp"

namespace rmlab {

struct Segment {
  int begin = 0;
  int end = 0;  // half-open
};

// Layout: prompt ++ reference ++ [split] ++ prompt ++ candidate ++ [reward].
// The prompt is duplicated literally; the reward token is always final and is
// where the scoring head reads the encoder state.
struct PackedExample {
  Tokens tokens;
  int reward_position = 0;
  Segment prompt_a;
  Segment reference;
  Segment prompt_b;
  Segment candidate;
};

constexpr std::size_t packed_length(std::size_t prompt_len, std::size_t ref_len,
                                    std::size_t cand_len) {
  return 2 * prompt_len + ref_len + cand_len + 2;
}

PackedExample pack_example(std::span<const Token> prompt,
                           std::span<const Token> reference,
                           std::span<const Token> candidate, const Vocab& vocab,
                           int max_seq);

struct UnpackedExample {
  Tokens prompt;
  Tokens reference;
  Tokens candidate;
};

// Validates the structural invariants (single split, final reward token,
// consistent segments, identical prompt copies) and recovers the parts.
UnpackedExample unpack_example(const PackedExample& packed, const Vocab& vocab);

}  // namespace rmlab
