#include "rmlab/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "rmlab/error.hpp"
#include "rmlab/rng.hpp"

namespace rmlab {

using nlohmann::json;

Vocab Vocab::with_content(int size) {
  Vocab v;
  v.size = size;
  v.pad = size;
  v.bos = size + 1;
  v.split = size + 2;
  v.reward = size + 3;
  v.validate();
  return v;
}

int Vocab::total() const {
  return std::max({pad, bos, split, reward, Token(size - 1)}) + 1;
}

void Vocab::validate() const {
  require(size >= 2, "vocab: content size must be >= 2, got ", size);
  const Token r[4] = {pad, bos, split, reward};
  for (Token t : r)
    require(t >= size, "vocab: reserved id ", t, " collides with content range [0, ",
            size, ")");
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      require(r[i] != r[j], "vocab: reserved ids must be pairwise distinct");
}

void SamplingParams::validate() const {
  require(temperature > 0.0, "sampling: temperature must be positive, got ",
          temperature);
  require(top_p > 0.0 && top_p <= 1.0, "sampling: top_p must be in (0, 1], got ",
          top_p);
  require(top_k >= 1, "sampling: top_k must be >= 1, got ", top_k);
  require(max_len >= 1, "sampling: max_len must be >= 1, got ", max_len);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

MarkovPolicy::MarkovPolicy(std::string id, int order, const Vocab& vocab,
                           std::vector<double> logits)
    : id_(std::move(id)), order_(order), vocab_(vocab), logits_(std::move(logits)) {
  vocab_.validate();
  require(order_ >= 0, "policy: order must be >= 0, got ", order_);
  std::size_t rows = 1;
  for (int i = 0; i < order_; ++i) rows *= vocab_.size + 1;
  require(logits_.size() == rows * vocab_.size, "policy '", id_,
          "': logits size ", logits_.size(), " does not match ", rows, " rows x ",
          vocab_.size, " tokens");
}

MarkovPolicy MarkovPolicy::make(int order, const Vocab& vocab, std::uint64_t seed,
                                double spread, std::string id) {
  vocab.validate();
  require(order >= 0, "policy: order must be >= 0, got ", order);
  require(spread >= 0.0, "policy: logit spread must be >= 0, got ", spread);
  if (id.empty()) {
    std::ostringstream os;
    os << "mp-o" << order << "-v" << vocab.size << "-s" << seed;
    id = os.str();
  }
  std::size_t rows = 1;
  for (int i = 0; i < order; ++i) rows *= vocab.size + 1;
  std::vector<double> logits(rows * vocab.size);
  Rng rng(derive_seed(seed, 0x706f6c6963ULL));
  for (double& v : logits) v = spread == 0.0 ? 0.0 : spread * rng.gaussian();
  return MarkovPolicy(std::move(id), order, vocab, std::move(logits));
}

std::size_t MarkovPolicy::row_index(std::span<const Token> history) const {
  const std::size_t base = vocab_.size + 1;
  std::size_t idx = 0;
  for (int i = 0; i < order_; ++i) {
    const std::ptrdiff_t pos =
        static_cast<std::ptrdiff_t>(history.size()) - order_ + i;
    std::size_t digit;
    if (pos < 0) {
      digit = vocab_.size;  // BOS padding
    } else {
      const Token t = history[pos];
      if (t == vocab_.bos) {
        digit = vocab_.size;
      } else {
        require(vocab_.is_content(t), "policy '", id_, "': context token ", t,
                " is not a content token");
        digit = static_cast<std::size_t>(t);
      }
    }
    idx = idx * base + digit;
  }
  return idx;
}

std::vector<double> MarkovPolicy::next_token_dist(
    std::span<const Token> history) const {
  const std::size_t row = row_index(history);
  return softmax(std::span<const double>(logits_).subspan(row * vocab_.size,
                                                          vocab_.size));
}

namespace {

// One filtered sampling step. Probabilities are softmax(logits / temperature);
// the survivor order is (probability descending, token id ascending).
Token sample_step(std::span<const double> row, const Vocab& vocab,
                  const SamplingParams& params, Rng& rng) {
  std::vector<double> scaled(row.size());
  for (std::size_t i = 0; i < row.size(); ++i)
    scaled[i] = row[i] / params.temperature;
  std::vector<double> probs = softmax(scaled);

  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;
  });

  const std::size_t k_eff =
      std::min<std::size_t>(params.top_k, static_cast<std::size_t>(vocab.size));
  std::size_t cut = k_eff;
  double cum = 0.0;
  for (std::size_t i = 0; i < k_eff; ++i) {
    cum += probs[order[i]];
    if (cum >= params.top_p) {
      cut = i + 1;
      break;
    }
  }
  double mass = 0.0;
  for (std::size_t i = 0; i < cut; ++i) mass += probs[order[i]];

  // Sampling u in [0, mass) from the kept prefix is the same as renormalizing
  // and inverting the CDF.
  const double u = rng.uniform() * mass;
  double acc = 0.0;
  for (std::size_t i = 0; i < cut; ++i) {
    acc += probs[order[i]];
    if (u < acc) return static_cast<Token>(order[i]);
  }
  return static_cast<Token>(order[cut - 1]);
}

}  // namespace

Trajectory MarkovPolicy::sample(std::span<const Token> prompt,
                                const SamplingParams& params,
                                std::uint64_t seed) const {
  params.validate();
  require(!prompt.empty(), "sample: prompt must be non-empty");
  for (Token t : prompt)
    require(vocab_.is_content(t), "sample: prompt token ", t,
            " is not a content token");

  Trajectory traj;
  traj.prompt_len = static_cast<int>(prompt.size());
  traj.source_policy = id_;
  traj.tokens.assign(prompt.begin(), prompt.end());
  traj.tokens.reserve(prompt.size() + params.max_len);

  Rng rng(derive_seed(seed, 0x73616d70ULL));
  for (int step = 0; step < params.max_len; ++step) {
    const std::size_t row = row_index(traj.tokens);
    traj.tokens.push_back(sample_step(
        std::span<const double>(logits_).subspan(row * vocab_.size, vocab_.size),
        vocab_, params, rng));
  }
  return traj;
}

double MarkovPolicy::log_prob(const Trajectory& traj) const {
  require(traj.prompt_len >= 0 &&
              traj.prompt_len <= static_cast<int>(traj.tokens.size()),
          "log_prob: prompt_len ", traj.prompt_len, " out of range for ",
          traj.tokens.size(), " tokens");
  double lp = 0.0;
  for (std::size_t i = traj.prompt_len; i < traj.tokens.size(); ++i) {
    const Token t = traj.tokens[i];
    require(vocab_.is_content(t), "log_prob: token ", t,
            " is not a content token");
    const std::vector<double> dist = next_token_dist(
        std::span<const Token>(traj.tokens).first(i));
    lp += std::log(dist[t]);
  }
  return lp;
}

MarkovPolicy MarkovPolicy::perturbed(double epsilon, std::uint64_t seed) const {
  require(epsilon >= 0.0, "perturb: epsilon must be >= 0, got ", epsilon);
  std::vector<double> logits = logits_;
  Rng rng(derive_seed(seed, 0x70657274ULL));
  for (double& v : logits) v += epsilon * rng.gaussian();
  std::ostringstream os;
  os << id_ << "+e" << epsilon << "s" << seed;
  return MarkovPolicy(os.str(), order_, vocab_, std::move(logits));
}

void MarkovPolicy::save(const std::filesystem::path& path) const {
  json j;
  j["format"] = "markov-policy-v1";
  j["id"] = id_;
  j["order"] = order_;
  j["vocab"] = {{"size", vocab_.size},
                {"pad", vocab_.pad},
                {"bos", vocab_.bos},
                {"split", vocab_.split},
                {"reward", vocab_.reward}};
  j["logits"] = logits_;
  std::ofstream out(path);
  require(out.good(), "policy save: cannot open ", path.string());
  out << j.dump(1) << "\n";
  require(out.good(), "policy save: write failed for ", path.string());
}

MarkovPolicy MarkovPolicy::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), "policy load: cannot open ", path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail("policy load: ", path.string(), ": ", e.what());
  }
  require(j.value("format", "") == std::string("markov-policy-v1"),
          "policy load: ", path.string(), ": unknown format");
  Vocab v;
  try {
    const json& jv = j.at("vocab");
    v.size = jv.at("size").get<int>();
    v.pad = jv.at("pad").get<Token>();
    v.bos = jv.at("bos").get<Token>();
    v.split = jv.at("split").get<Token>();
    v.reward = jv.at("reward").get<Token>();
    return MarkovPolicy(j.at("id").get<std::string>(), j.at("order").get<int>(),
                        v, j.at("logits").get<std::vector<double>>());
  } catch (const json::exception& e) {
    fail("policy load: ", path.string(), ": ", e.what());
  }
}

}  // namespace rmlab
