#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "rmlab/error.hpp"
#include "rmlab/oracle.hpp"
#include "rmlab/policy.hpp"
#include "rmlab/rng.hpp"

using namespace rmlab;

namespace {

SamplingParams full_support(int vocab, int max_len) {
  SamplingParams p;
  p.temperature = 1.0;
  p.top_p = 1.0;
  p.top_k = vocab;
  p.max_len = max_len;
  return p;
}

}  // namespace

TEST_CASE("vocab reserves ids after the content range") {
  Vocab v = Vocab::with_content(5);
  CHECK(v.size == 5);
  CHECK(v.total() == 9);
  CHECK(v.is_content(0));
  CHECK(v.is_content(4));
  CHECK(!v.is_content(5));
  CHECK(!v.is_content(-1));
  std::vector<Token> reserved = {v.pad, v.bos, v.split, v.reward};
  std::sort(reserved.begin(), reserved.end());
  CHECK(reserved.front() >= 5);
  CHECK(std::adjacent_find(reserved.begin(), reserved.end()) == reserved.end());
  CHECK_NOTHROW(v.validate());

  Vocab bad = v;
  bad.split = 2;  // collides with content
  CHECK_THROWS_AS(bad.validate(), Error);
  CHECK_THROWS_AS(Vocab::with_content(1).validate(), Error);
}

TEST_CASE("sampling params validation") {
  SamplingParams p;
  CHECK_NOTHROW(p.validate());
  p.temperature = 0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = SamplingParams{};
  p.top_p = 0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = SamplingParams{};
  p.top_p = 1.5;
  CHECK_THROWS_AS(p.validate(), Error);
  p = SamplingParams{};
  p.top_k = 0;
  CHECK_THROWS_AS(p.validate(), Error);
  p = SamplingParams{};
  p.max_len = 0;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("spread zero gives the uniform policy") {
  Vocab v = Vocab::with_content(6);
  MarkovPolicy p = make_markov_policy(1, v, 9, 0.0);
  Tokens hist = {2};
  std::vector<double> dist = p.next_token_dist(hist);
  for (double q : dist) CHECK(q == doctest::Approx(1.0 / 6).epsilon(1e-12));
}

TEST_CASE("make is deterministic and order shapes the table") {
  Vocab v = Vocab::with_content(4);
  MarkovPolicy a = make_markov_policy(2, v, 1234, 1.5);
  MarkovPolicy b = make_markov_policy(2, v, 1234, 1.5);
  CHECK(a.logits() == b.logits());
  CHECK(a.id() == b.id());
  // (size + 1)^order rows: BOS is a context digit
  CHECK(a.rows() == 25);
  MarkovPolicy c = make_markov_policy(2, v, 1235, 1.5);
  CHECK(a.logits() != c.logits());
}

TEST_CASE("row_index pads short histories with BOS on the left") {
  Vocab v = Vocab::with_content(3);
  MarkovPolicy p = make_markov_policy(2, v, 5, 1.0);
  // digits are (previous, last) base (size+1), BOS digit = size
  Tokens empty;
  Tokens one = {2};
  Tokens two = {1, 2};
  Tokens three = {0, 1, 2};
  CHECK(p.row_index(empty) == 3u * 4 + 3);
  CHECK(p.row_index(one) == 3u * 4 + 2);
  CHECK(p.row_index(two) == 1u * 4 + 2);
  CHECK(p.row_index(three) == 1u * 4 + 2);  // only the last `order` count
}

TEST_CASE("sample respects prompt, horizon and vocabulary") {
  Vocab v = Vocab::with_content(5);
  MarkovPolicy p = make_markov_policy(1, v, 77, 1.0);
  Tokens prompt = {3, 1};
  SamplingParams params;  // defaults: top_p 0.9, top_k 50
  params.max_len = 12;
  Trajectory t = p.sample(prompt, params, 42);
  CHECK(t.prompt_len == 2);
  CHECK(t.tokens.size() == 14);
  CHECK(Tokens(t.prompt().begin(), t.prompt().end()) == prompt);
  for (Token tok : t.continuation()) CHECK(v.is_content(tok));
  CHECK(t.source_policy == p.id());

  Trajectory again = p.sample(prompt, params, 42);
  CHECK(t.tokens == again.tokens);
  Trajectory other = p.sample(prompt, params, 43);
  CHECK(t.tokens != other.tokens);

  Tokens empty;
  CHECK_THROWS_AS(p.sample(empty, params, 1), Error);
  Tokens bad = {v.pad};
  CHECK_THROWS_AS(p.sample(bad, params, 1), Error);
}

TEST_CASE("log_prob exponentiates to a normalized distribution") {
  Vocab v = Vocab::with_content(4);
  MarkovPolicy p = make_markov_policy(1, v, 3, 1.2);
  Tokens prompt = {1};
  double total = 0;
  for (Token a = 0; a < 4; ++a) {
    for (Token b = 0; b < 4; ++b) {
      Trajectory t;
      t.tokens = {1, a, b};
      t.prompt_len = 1;
      total += std::exp(p.log_prob(t));
    }
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("full-support sampling matches the exact distribution") {
  Vocab v = Vocab::with_content(5);
  MarkovPolicy p = make_markov_policy(1, v, 21, 1.0);
  Tokens prompt = {4};
  std::vector<double> expect = p.next_token_dist(prompt);

  const int n = 40000;
  std::vector<int> counts(5, 0);
  SamplingParams params = full_support(5, 1);
  for (int i = 0; i < n; ++i) {
    Trajectory t = p.sample(prompt, params, derive_seed(900, i));
    ++counts[t.continuation()[0]];
  }
  for (int k = 0; k < 5; ++k) {
    double freq = static_cast<double>(counts[k]) / n;
    double se = std::sqrt(expect[k] * (1 - expect[k]) / n);
    CHECK(std::abs(freq - expect[k]) < 3.5 * se + 1e-9);
  }
}

TEST_CASE("top-p truncation keeps the smallest dominating set") {
  Vocab v = Vocab::with_content(4);
  MarkovPolicy p = make_markov_policy(1, v, 8, 2.0);
  Tokens prompt = {0};
  std::vector<double> dist = p.next_token_dist(prompt);

  // reference truncation: sort by (prob desc, id asc), include up to the
  // first token whose cumulative mass reaches top_p, renormalize
  const double top_p = 0.7;
  std::vector<int> order(4);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (dist[a] != dist[b]) return dist[a] > dist[b];
    return a < b;
  });
  std::vector<double> expect(4, 0.0);
  double cum = 0;
  for (int id : order) {
    expect[id] = dist[id];
    cum += dist[id];
    if (cum >= top_p) break;
  }
  for (double& q : expect) q /= cum;

  SamplingParams params = full_support(4, 1);
  params.top_p = top_p;
  const int n = 40000;
  std::vector<int> counts(4, 0);
  for (int i = 0; i < n; ++i) {
    Trajectory t = p.sample(prompt, params, derive_seed(31, i));
    ++counts[t.continuation()[0]];
  }
  for (int k = 0; k < 4; ++k) {
    double freq = static_cast<double>(counts[k]) / n;
    if (expect[k] == 0) {
      CHECK(counts[k] == 0);  // truncated away entirely
    } else {
      double se = std::sqrt(expect[k] * (1 - expect[k]) / n);
      CHECK(std::abs(freq - expect[k]) < 3.5 * se + 1e-9);
    }
  }
}

TEST_CASE("top-k truncation keeps the k most likely tokens") {
  Vocab v = Vocab::with_content(6);
  MarkovPolicy p = make_markov_policy(1, v, 13, 2.0);
  Tokens prompt = {5};
  std::vector<double> dist = p.next_token_dist(prompt);
  std::vector<int> order(6);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (dist[a] != dist[b]) return dist[a] > dist[b];
    return a < b;
  });

  SamplingParams params = full_support(6, 1);
  params.top_k = 2;
  std::vector<int> counts(6, 0);
  for (int i = 0; i < 5000; ++i) {
    Trajectory t = p.sample(prompt, params, derive_seed(77, i));
    ++counts[t.continuation()[0]];
  }
  for (int k = 0; k < 6; ++k) {
    bool kept = k == order[0] || k == order[1];
    if (!kept) CHECK(counts[k] == 0);
  }
  CHECK(counts[order[0]] + counts[order[1]] == 5000);
}

TEST_CASE("perturbation strength orders divergence from the base") {
  Vocab v = Vocab::with_content(3);
  Tokens prompt = {0};
  const int horizon = 3;
  double mean_kl[3] = {0, 0, 0};
  const double eps[3] = {0.1, 0.5, 1.0};
  const int n_seeds = 24;
  for (int s = 0; s < n_seeds; ++s) {
    MarkovPolicy base = make_markov_policy(1, v, derive_seed(1000, s), 1.0);
    for (int e = 0; e < 3; ++e) {
      MarkovPolicy q = base.perturbed(eps[e], derive_seed(2000, s, e));
      mean_kl[e] += exact_kl(q, base, prompt, horizon) / n_seeds;
    }
  }
  CHECK(mean_kl[0] < mean_kl[1]);
  CHECK(mean_kl[1] < mean_kl[2]);
  CHECK(mean_kl[0] > 0);
}

TEST_CASE("save and load round-trip bit-exactly") {
  Vocab v = Vocab::with_content(4);
  MarkovPolicy p = make_markov_policy(2, v, 4242, 0.9);
  auto path = std::filesystem::temp_directory_path() / "rmlab_policy_rt.json";
  p.save(path);
  MarkovPolicy q = MarkovPolicy::load(path);
  CHECK(q.id() == p.id());
  CHECK(q.order() == p.order());
  CHECK(q.vocab().size == p.vocab().size);
  CHECK(q.vocab().pad == p.vocab().pad);
  REQUIRE(q.logits().size() == p.logits().size());
  for (std::size_t i = 0; i < p.logits().size(); ++i)
    CHECK(q.logits()[i] == p.logits()[i]);  // bitwise, not approximate
  std::filesystem::remove(path);
}

TEST_CASE("softmax handles large logits") {
  std::vector<double> logits = {1000.0, 1000.0, 999.0};
  std::vector<double> pr = softmax(logits);
  CHECK(pr[0] == doctest::Approx(pr[1]).epsilon(1e-12));
  CHECK(pr[0] + pr[1] + pr[2] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pr[2] < pr[0]);
}
