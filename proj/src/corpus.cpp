#include "rmlab/corpus.hpp"

#include <algorithm>
#include <fstream>

#include "json.hpp"
#include "rmlab/error.hpp"
#include "rmlab/io_util.hpp"
#include "rmlab/rng.hpp"

namespace rmlab {

using nlohmann::json;

void PromptSource::validate(const Vocab& vocab) const {
  require(!texts.empty(), "prompt source: no texts");
  require(min_prefix >= 1, "prompt source: min_prefix must be >= 1, got ",
          min_prefix);
  require(max_prefix >= min_prefix, "prompt source: max_prefix ", max_prefix,
          " < min_prefix ", min_prefix);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    require(!texts[i].empty(), "prompt source: text ", i, " is empty");
    if (!whole_text)
      require(static_cast<int>(texts[i].size()) >= min_prefix,
              "prompt source: text ", i, " is shorter than min_prefix ",
              min_prefix);
    for (Token t : texts[i])
      require(vocab.is_content(t), "prompt source: text ", i, " has token ", t,
              " outside the content range");
  }
}

PromptSource PromptSource::random(const Vocab& vocab, std::size_t n_texts,
                                  int text_len, int min_prefix, int max_prefix,
                                  std::uint64_t seed, bool whole_text) {
  require(n_texts >= 1, "prompt source: n_texts must be >= 1");
  require(text_len >= 1, "prompt source: text_len must be >= 1");
  PromptSource src;
  src.min_prefix = min_prefix;
  src.max_prefix = max_prefix;
  src.whole_text = whole_text;
  src.texts.resize(n_texts);
  Rng rng(derive_seed(seed, 0x74657874ULL));
  for (Tokens& text : src.texts) {
    text.resize(text_len);
    for (Token& t : text) t = static_cast<Token>(rng.below(vocab.size));
  }
  src.validate(vocab);
  return src;
}

Tokens sample_prefix(const PromptSource& source, std::uint64_t seed) {
  require(!source.texts.empty(), "sample_prefix: no texts");
  Rng rng(derive_seed(seed, 0x70726566ULL));
  const Tokens& text = source.texts[rng.below(source.texts.size())];
  if (source.whole_text) return text;
  const int hi = std::min<int>(source.max_prefix, static_cast<int>(text.size()));
  const int lo = std::min(source.min_prefix, hi);
  const int len = lo + static_cast<int>(rng.below(hi - lo + 1));
  return Tokens(text.begin(), text.begin() + len);
}

void CleanConfig::validate() const {
  require(repeat_window >= 1, "clean: repeat_window must be >= 1, got ",
          repeat_window);
  require(max_repeats >= 1, "clean: max_repeats must be >= 1, got ", max_repeats);
  require(max_len >= 1, "clean: max_len must be >= 1, got ", max_len);
}

namespace {

// Number of back-to-back occurrences of the block [i, i+w) starting at i.
std::size_t run_length(std::span<const Token> seq, std::size_t i, std::size_t w) {
  std::size_t reps = 1;
  while (i + (reps + 1) * w <= seq.size() &&
         std::equal(seq.begin() + i, seq.begin() + i + w,
                     seq.begin() + i + reps * w))
    ++reps;
  return reps;
}

// One left-to-right pass for a single window width. Positions inside an
// untruncated region advance one token at a time so every phase is examined.
Tokens collapse_width(std::span<const Token> seq, std::size_t w,
                      std::size_t max_repeats, bool& changed) {
  Tokens out;
  out.reserve(seq.size());
  std::size_t i = 0;
  while (i < seq.size()) {
    if (i + w <= seq.size()) {
      const std::size_t reps = run_length(seq, i, w);
      if (reps > max_repeats) {
        out.insert(out.end(), seq.begin() + i, seq.begin() + i + max_repeats * w);
        i += reps * w;
        changed = true;
        continue;
      }
    }
    out.push_back(seq[i]);
    ++i;
  }
  return out;
}

}  // namespace

Tokens clean_trajectory(std::span<const Token> tokens, const CleanConfig& cfg) {
  cfg.validate();
  Tokens cur(tokens.begin(),
             tokens.begin() + std::min<std::size_t>(tokens.size(), cfg.max_len));
  // Each modifying pass strictly shortens the sequence, so this terminates.
  for (;;) {
    bool changed = false;
    for (int w = 1; w <= cfg.repeat_window; ++w)
      cur = collapse_width(cur, w, cfg.max_repeats, changed);
    if (!changed) return cur;
  }
}

bool has_excess_repeats(std::span<const Token> tokens, int repeat_window,
                        int max_repeats) {
  for (int w = 1; w <= repeat_window; ++w)
    for (std::size_t i = 0; i + w <= tokens.size(); ++i)
      if (run_length(tokens, i, w) > static_cast<std::size_t>(max_repeats))
        return true;
  return false;
}

TrainTriple build_pretrain_triple(const PromptSource& source,
                                  std::span<const MarkovPolicy> pool,
                                  const SamplingParams& params,
                                  const CleanConfig& clean, std::uint64_t seed) {
  require(pool.size() >= 2, "build_triple: need at least 2 policies, got ",
          pool.size());
  Rng pick(derive_seed(seed, 1));
  const std::size_t a = pick.below(pool.size());
  const std::size_t b = (a + 1 + pick.below(pool.size() - 1)) % pool.size();

  TrainTriple triple;
  triple.prompt = sample_prefix(source, derive_seed(seed, 2));
  auto continuation = [&](const MarkovPolicy& policy, std::uint64_t s) {
    const Trajectory traj = policy.sample(triple.prompt, params, s);
    return clean_trajectory(traj.continuation(), clean);
  };
  triple.reference = continuation(pool[a], derive_seed(seed, 3));
  triple.positive = continuation(pool[a], derive_seed(seed, 4));
  triple.negative = continuation(pool[b], derive_seed(seed, 5));
  triple.policy_a = pool[a].id();
  triple.policy_b = pool[b].id();
  return triple;
}

namespace {

json tokens_to_json(const Tokens& t) { return json(t); }

Tokens tokens_from_json(const json& j, const char* key, std::size_t line) {
  require(j.contains(key), "dataset line ", line, ": missing key '", key, "'");
  const json& arr = j.at(key);
  require(arr.is_array(), "dataset line ", line, ": '", key,
          "' must be an integer array");
  Tokens out;
  out.reserve(arr.size());
  for (const json& v : arr) {
    require(v.is_number_integer(), "dataset line ", line, ": '", key,
            "' must contain only integers");
    const auto t = v.get<std::int64_t>();
    require(t >= 0, "dataset line ", line, ": '", key, "' has negative token ", t);
    out.push_back(static_cast<Token>(t));
  }
  require(!out.empty(), "dataset line ", line, ": '", key, "' is empty");
  return out;
}

std::string string_from_json(const json& j, const char* key, std::size_t line) {
  require(j.contains(key) && j.at(key).is_string(), "dataset line ", line,
          ": missing string key '", key, "'");
  return j.at(key).get<std::string>();
}

void write_sidecar(const std::filesystem::path& path, const DatasetMeta& meta,
                   std::size_t count, const std::string& content) {
  json side;
  side["kind"] = meta.kind;
  side["count"] = count;
  side["root_seed"] = meta.root_seed;
  side["policy_ids"] = meta.policy_ids;
  side["content_hash"] = hex16(fnv1a64(content));
  write_file_atomic(path.string() + ".manifest.json", side.dump(1) + "\n");
}

void check_sidecar(const std::filesystem::path& path, std::size_t count,
                   const std::string& content) {
  const std::filesystem::path side_path = path.string() + ".manifest.json";
  if (!std::filesystem::exists(side_path)) return;
  json side;
  try {
    side = json::parse(read_file(side_path));
  } catch (const json::exception& e) {
    fail("dataset manifest ", side_path.string(), ": ", e.what());
  }
  if (side.contains("count"))
    require(side.at("count").get<std::size_t>() == count, "dataset ",
            path.string(), ": manifest count ", side.at("count").get<std::size_t>(),
            " != ", count, " records on disk");
  if (side.contains("content_hash"))
    require(side.at("content_hash").get<std::string>() == hex16(fnv1a64(content)),
            "dataset ", path.string(), ": content hash mismatch against manifest");
}

std::vector<std::pair<std::size_t, json>> parse_jsonl(
    const std::filesystem::path& path, const std::string& content) {
  std::vector<std::pair<std::size_t, json>> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    ++line_no;
    if (end > start) {
      try {
        out.emplace_back(line_no, json::parse(content.substr(start, end - start)));
      } catch (const json::exception& e) {
        fail("dataset ", path.string(), " line ", line_no, ": ", e.what());
      }
    }
    if (end == content.size()) break;
    start = end + 1;
  }
  return out;
}

}  // namespace

void write_dataset(const std::filesystem::path& path,
                   std::span<const TrainTriple> triples, const DatasetMeta& meta) {
  std::string content;
  for (const TrainTriple& t : triples) {
    json j;
    j["prompt"] = tokens_to_json(t.prompt);
    j["reference"] = tokens_to_json(t.reference);
    j["positive"] = tokens_to_json(t.positive);
    j["negative"] = tokens_to_json(t.negative);
    j["policy_a"] = t.policy_a;
    j["policy_b"] = t.policy_b;
    content += j.dump();
    content += '\n';
  }
  write_file_atomic(path, content);
  write_sidecar(path, meta, triples.size(), content);
}

std::vector<TrainTriple> read_dataset(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  std::vector<TrainTriple> out;
  for (const auto& [line, j] : parse_jsonl(path, content)) {
    TrainTriple t;
    t.prompt = tokens_from_json(j, "prompt", line);
    t.reference = tokens_from_json(j, "reference", line);
    t.positive = tokens_from_json(j, "positive", line);
    t.negative = tokens_from_json(j, "negative", line);
    t.policy_a = string_from_json(j, "policy_a", line);
    t.policy_b = string_from_json(j, "policy_b", line);
    out.push_back(std::move(t));
  }
  check_sidecar(path, out.size(), content);
  return out;
}

void write_ranked_dataset(const std::filesystem::path& path,
                          std::span<const RankedTriple> triples,
                          const DatasetMeta& meta) {
  std::string content;
  for (const RankedTriple& t : triples) {
    json j;
    j["prompt"] = tokens_to_json(t.prompt);
    j["best"] = tokens_to_json(t.best);
    j["middle"] = tokens_to_json(t.middle);
    j["worst"] = tokens_to_json(t.worst);
    content += j.dump();
    content += '\n';
  }
  write_file_atomic(path, content);
  write_sidecar(path, meta, triples.size(), content);
}

std::vector<RankedTriple> read_ranked_dataset(
    const std::filesystem::path& path) {
  const std::string content = read_file(path);
  std::vector<RankedTriple> out;
  for (const auto& [line, j] : parse_jsonl(path, content)) {
    RankedTriple t;
    t.prompt = tokens_from_json(j, "prompt", line);
    t.best = tokens_from_json(j, "best", line);
    t.middle = tokens_from_json(j, "middle", line);
    t.worst = tokens_from_json(j, "worst", line);
    require(t.best != t.middle && t.best != t.worst && t.middle != t.worst,
            "dataset line ", line, ": ranked continuations must be distinct");
    out.push_back(std::move(t));
  }
  check_sidecar(path, out.size(), content);
  return out;
}

}  // namespace rmlab
