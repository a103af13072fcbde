#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "rmlab/error.hpp"
#include "rmlab/eval.hpp"

using namespace rmlab;
namespace fs = std::filesystem;

namespace {

// Scores a candidate by how many of its tokens equal the first prompt token.
class MatchCountScorer : public RewardScorer {
 public:
  double score(std::span<const Token> prompt, std::span<const Token>,
               std::span<const Token> candidate) const override {
    double s = 0;
    for (Token t : candidate)
      if (t == prompt[0]) s += 1;
    return s;
  }
};

EvalItem item(Tokens prompt, std::vector<Tokens> trajs, std::string cat) {
  EvalItem it;
  it.prompt = std::move(prompt);
  it.trajectories = std::move(trajs);
  it.category = std::move(cat);
  return it;
}

}  // namespace

TEST_CASE("preference accuracy tallies wins and fractional ties") {
  MatchCountScorer rm;
  std::vector<EvalItem> items;
  // rank-2 scores 2, rank-3 scores 0: win
  items.push_back(item({7}, {{7, 7, 7}, {7, 7}, {1, 2}}, "a"));
  // rank-2 scores 0, rank-3 scores 1: loss
  items.push_back(item({7}, {{7}, {1, 1}, {7, 2}}, "a"));
  // both score 1: tie, counts one half
  items.push_back(item({7}, {{7, 7}, {7, 1}, {1, 7}}, "b"));

  EvalResult r = preference_accuracy(rm, items);
  CHECK(r.overall.count == 3);
  CHECK(r.overall.wins == 1);
  CHECK(r.overall.ties == 1);
  CHECK(r.overall.accuracy == doctest::Approx(1.5 / 3.0).epsilon(1e-15));
  REQUIRE(r.categories.count("a") == 1);
  REQUIRE(r.categories.count("b") == 1);
  CHECK(r.categories["a"].count == 2);
  CHECK(r.categories["a"].wins == 1);
  CHECK(r.categories["a"].accuracy == doctest::Approx(0.5));
  CHECK(r.categories["b"].ties == 1);
  CHECK(r.categories["b"].accuracy == doctest::Approx(0.5));
}

TEST_CASE("preference accuracy is stable across worker counts") {
  MatchCountScorer rm;
  std::vector<EvalItem> items;
  for (int i = 0; i < 40; ++i) {
    const Token a = static_cast<Token>(i % 5);
    items.push_back(item({a, 1}, {{a, a}, {a, 0, 0}, {2, 3}},
                         i % 2 ? "even" : "odd"));
  }
  EvalResult serial = preference_accuracy(rm, items, 1);
  EvalResult parallel = preference_accuracy(rm, items, 8);
  CHECK(serial.overall.wins == parallel.overall.wins);
  CHECK(serial.overall.ties == parallel.overall.ties);
  CHECK(serial.overall.accuracy == parallel.overall.accuracy);
}

TEST_CASE("eval item validation") {
  EvalItem bad = item({}, {{1}, {2}, {3}}, "x");
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = item({1}, {{1}, {2}}, "x");
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = item({1}, {{1}, {}, {3}}, "x");
  CHECK_THROWS_AS(bad.validate(), Error);
  MatchCountScorer rm;
  CHECK_THROWS_AS(preference_accuracy(rm, {}), Error);
}

TEST_CASE("constant scorer ties every comparison") {
  ConstantScorer rm(3.25);
  std::vector<EvalItem> items = {item({1}, {{1}, {2}, {3}}, "c"),
                                 item({2}, {{3}, {1}, {2}}, "c")};
  EvalResult r = preference_accuracy(rm, items);
  CHECK(r.overall.ties == 2);
  CHECK(r.overall.wins == 0);
  CHECK(r.overall.accuracy == doctest::Approx(0.5));
}

TEST_CASE("hash coin scorer sits near one half") {
  HashCoinScorer rm(99);
  std::vector<EvalItem> items;
  for (int i = 0; i < 4000; ++i) {
    // base-11 digits keep all items distinct, so the flips are independent
    const Token a = static_cast<Token>(i % 11);
    const Token b = static_cast<Token>((i / 11) % 11);
    const Token c = static_cast<Token>((i / 121) % 11);
    const Token d = static_cast<Token>((i / 1331) % 11);
    items.push_back(item({a, b}, {{c, d, a}, {b, c, a}, {a, b, d, c}}, "coin"));
  }
  EvalResult r = preference_accuracy(rm, items);
  // binomial null: SE ~ 0.5 / sqrt(4000) ~ 0.0079
  CHECK(std::abs(r.overall.accuracy - 0.5) < 0.03);
  CHECK(r.overall.ties == 0);

  // determinism in the seed
  double s1 = rm.score(Tokens{1, 2}, Tokens{3}, Tokens{4});
  double s2 = rm.score(Tokens{1, 2}, Tokens{3}, Tokens{4});
  CHECK(s1 == s2);
  HashCoinScorer other(100);
  CHECK(other.score(Tokens{1, 2}, Tokens{3}, Tokens{4}) != s1);
}

TEST_CASE("best-of-n picks the top score and breaks ties low") {
  MatchCountScorer rm;
  std::vector<Tokens> cands = {{1, 2}, {7, 7}, {7, 7, 7}, {7, 7, 7}};
  CHECK(best_of_n(rm, Tokens{7}, Tokens{7}, cands) == 2);  // first maximum
  ConstantScorer flat(0.0);
  CHECK(best_of_n(flat, Tokens{7}, Tokens{7}, cands) == 0);
  CHECK_THROWS_AS(best_of_n(rm, Tokens{7}, Tokens{7}, {}), Error);
}

TEST_CASE("report text is fixed-format and json round-trips") {
  MatchCountScorer rm;
  std::vector<EvalItem> items = {item({5}, {{5, 5}, {5}, {0}}, "beta"),
                                 item({5}, {{5}, {0}, {5, 5}}, "alpha")};
  EvalResult r = preference_accuracy(rm, items);

  std::string text = eval_report_text(r);
  CHECK(text.find("category") != std::string::npos);
  CHECK(text.find("overall") != std::string::npos);
  // categories print in sorted order
  CHECK(text.find("alpha") < text.find("beta"));
  CHECK(eval_report_text(r) == text);

  EvalResult back = eval_result_from_json(eval_report_json(r));
  CHECK(back.overall.count == r.overall.count);
  CHECK(back.overall.wins == r.overall.wins);
  CHECK(back.overall.ties == r.overall.ties);
  CHECK(back.overall.accuracy == r.overall.accuracy);
  REQUIRE(back.categories.size() == r.categories.size());
  for (const auto& [name, stats] : r.categories) {
    CHECK(back.categories[name].count == stats.count);
    CHECK(back.categories[name].accuracy == stats.accuracy);
  }
  CHECK_THROWS_AS(eval_result_from_json(nlohmann::json::object()), Error);
}

TEST_CASE("eval datasets round-trip and reject bad lines") {
  std::vector<EvalItem> items = {item({1, 2}, {{3}, {4, 5}, {0}}, "x"),
                                 item({2}, {{0, 0}, {1}, {2, 2, 2}}, "y")};
  fs::path path = fs::temp_directory_path() / "rmlab_eval_rt.jsonl";
  write_eval_dataset(path, items);
  std::vector<EvalItem> back = read_eval_dataset(path);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].prompt == items[i].prompt);
    CHECK(back[i].trajectories == items[i].trajectories);
    CHECK(back[i].category == items[i].category);
  }
  fs::remove(path);

  fs::path bad = fs::temp_directory_path() / "rmlab_eval_bad.jsonl";
  {
    std::ofstream out(bad);
    out << R"({"prompt":[1],"trajectories":[[1],[2],[3]],"category":"x"})" << "\n";
    out << R"({"prompt":[1],"trajectories":[[1],[2]],"category":"x"})" << "\n";
  }
  try {
    read_eval_dataset(bad);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  fs::remove(bad);
}

TEST_CASE("implied-reward scorer prefers target-typical continuations") {
  Vocab v = Vocab::with_content(3);
  MarkovPolicy init = make_markov_policy(1, v, 4, 0.0);    // uniform
  MarkovPolicy target = make_markov_policy(1, v, 5, 2.0);  // peaked
  ImpliedRewardScorer rm(target, init, 0.7);

  // score is beta * (log target - log init), additive over steps
  Trajectory t;
  t.tokens = {0, 1, 2};
  t.prompt_len = 1;
  const double expected = 0.7 * (target.log_prob(t) - init.log_prob(t));
  CHECK(rm.score(Tokens{0}, Tokens{0}, Tokens{1, 2}) ==
        doctest::Approx(expected).epsilon(1e-12));
}
