#include "rmlab/packing.hpp"

#include <algorithm>

#include "rmlab/error.hpp"

namespace rmlab {

namespace {

void require_content(std::span<const Token> seq, const Vocab& vocab,
                     const char* what) {
  require(!seq.empty(), "pack: ", what, " must be non-empty");
  for (Token t : seq)
    require(vocab.is_content(t), "pack: ", what, " token ", t,
            " is not a content token");
}

}  // namespace

PackedExample pack_example(std::span<const Token> prompt,
                           std::span<const Token> reference,
                           std::span<const Token> candidate, const Vocab& vocab,
                           int max_seq) {
  vocab.validate();
  require_content(prompt, vocab, "prompt");
  require_content(reference, vocab, "reference");
  require_content(candidate, vocab, "candidate");

  const std::size_t need =
      packed_length(prompt.size(), reference.size(), candidate.size());
  require(need <= static_cast<std::size_t>(max_seq), "pack: packed length ", need,
          " exceeds max_seq ", max_seq);

  PackedExample out;
  out.tokens.reserve(need);
  auto append = [&](std::span<const Token> part) {
    const int begin = static_cast<int>(out.tokens.size());
    out.tokens.insert(out.tokens.end(), part.begin(), part.end());
    return Segment{begin, static_cast<int>(out.tokens.size())};
  };
  out.prompt_a = append(prompt);
  out.reference = append(reference);
  out.tokens.push_back(vocab.split);
  out.prompt_b = append(prompt);
  out.candidate = append(candidate);
  out.tokens.push_back(vocab.reward);
  out.reward_position = static_cast<int>(out.tokens.size()) - 1;
  return out;
}

UnpackedExample unpack_example(const PackedExample& packed, const Vocab& vocab) {
  vocab.validate();
  const Tokens& t = packed.tokens;
  const int n = static_cast<int>(t.size());

  require(n >= 6, "unpack: sequence of length ", n, " is too short");
  require(packed.reward_position == n - 1,
          "unpack: reward position must be the final token");
  require(t.back() == vocab.reward, "unpack: final token is not the reward token");
  require(std::count(t.begin(), t.end(), vocab.reward) == 1,
          "unpack: expected exactly one reward token");
  require(std::count(t.begin(), t.end(), vocab.split) == 1,
          "unpack: expected exactly one split token");

  const Segment pa = packed.prompt_a, rf = packed.reference, pb = packed.prompt_b,
                cd = packed.candidate;
  require(pa.begin == 0 && pa.end > pa.begin && rf.begin == pa.end &&
              rf.end > rf.begin && pb.begin == rf.end + 1 && pb.end > pb.begin &&
              cd.begin == pb.end && cd.end > cd.begin && cd.end == n - 1,
          "unpack: segment map does not describe the packed layout");
  require(t[rf.end] == vocab.split, "unpack: split token not at the segment boundary");
  require(pa.end - pa.begin == pb.end - pb.begin,
          "unpack: prompt copies differ in length");
  for (int i = 0; i < pa.end - pa.begin; ++i)
    require(t[pa.begin + i] == t[pb.begin + i],
            "unpack: prompt copies disagree at offset ", i);

  auto slice = [&](Segment s, const char* what) {
    Tokens out(t.begin() + s.begin, t.begin() + s.end);
    for (Token tok : out)
      require(vocab.is_content(tok), "unpack: ", what, " token ", tok,
              " is not a content token");
    return out;
  };
  UnpackedExample out;
  out.prompt = slice(pa, "prompt");
  out.reference = slice(rf, "reference");
  out.candidate = slice(cd, "candidate");
  return out;
}

}  // namespace rmlab
