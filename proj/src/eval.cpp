#include "rmlab/eval.hpp"

#include <algorithm>
#include <cstdio>

#include "rmlab/error.hpp"
#include "rmlab/io_util.hpp"

namespace rmlab {

using nlohmann::json;

void EvalItem::validate() const {
  require(!prompt.empty(), "eval item: empty prompt");
  require(trajectories.size() >= 3, "eval item: need >= 3 ranked trajectories, got ",
          trajectories.size());
  for (const Tokens& t : trajectories)
    require(!t.empty(), "eval item: empty trajectory");
}

EvalResult preference_accuracy(const RewardScorer& rm,
                               std::span<const EvalItem> items,
                               std::size_t workers) {
  require(!items.empty(), "preference_accuracy: no items");
  for (const EvalItem& item : items) item.validate();

  // Per-item score pairs are computed up front (parallel-safe, no state), then
  // tallied in item order.
  std::vector<std::pair<double, double>> scores(items.size());
  parallel_for(items.size(), workers, [&](std::size_t i) {
    const EvalItem& item = items[i];
    const Tokens& ref = item.trajectories[0];
    scores[i] = {rm.score(item.prompt, ref, item.trajectories[1]),
                 rm.score(item.prompt, ref, item.trajectories[2])};
  });

  EvalResult result;
  for (std::size_t i = 0; i < items.size(); ++i) {
    CategoryStats& cat = result.categories[items[i].category];
    cat.count += 1;
    result.overall.count += 1;
    const auto [s2, s3] = scores[i];
    if (s2 == s3) {
      cat.ties += 1;
      result.overall.ties += 1;
    } else if (s2 > s3) {
      cat.wins += 1;
      result.overall.wins += 1;
    }
  }
  auto finish = [](CategoryStats& s) {
    s.accuracy = (static_cast<double>(s.wins) + 0.5 * static_cast<double>(s.ties)) /
                 static_cast<double>(s.count);
  };
  finish(result.overall);
  for (auto& [name, stats] : result.categories) finish(stats);
  return result;
}

std::size_t best_of_n(const RewardScorer& rm, std::span<const Token> prompt,
                      std::span<const Token> reference,
                      std::span<const Tokens> candidates) {
  require(!candidates.empty(), "best_of_n: no candidates");
  std::size_t best = 0;
  double best_score = rm.score(prompt, reference, candidates[0]);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double s = rm.score(prompt, reference, candidates[i]);
    if (s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

namespace {

std::string format_row(const std::string& name, const CategoryStats& s) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-24s %8zu %8zu %8zu %10.4f\n", name.c_str(),
                s.count, s.wins, s.ties, s.accuracy);
  return buf;
}

json stats_to_json(const CategoryStats& s) {
  return json{{"count", s.count},
              {"wins", s.wins},
              {"ties", s.ties},
              {"accuracy", s.accuracy}};
}

CategoryStats stats_from_json(const json& j) {
  CategoryStats s;
  s.count = j.at("count").get<std::size_t>();
  s.wins = j.at("wins").get<std::size_t>();
  s.ties = j.at("ties").get<std::size_t>();
  s.accuracy = j.at("accuracy").get<double>();
  return s;
}

}  // namespace

std::string eval_report_text(const EvalResult& result) {
  std::string out;
  char head[160];
  std::snprintf(head, sizeof(head), "%-24s %8s %8s %8s %10s\n", "category", "n",
                "wins", "ties", "accuracy");
  out += head;
  for (const auto& [name, stats] : result.categories)
    out += format_row(name, stats);
  out += format_row("overall", result.overall);
  return out;
}

json eval_report_json(const EvalResult& result) {
  json j;
  j["overall"] = stats_to_json(result.overall);
  json cats = json::object();
  for (const auto& [name, stats] : result.categories)
    cats[name] = stats_to_json(stats);
  j["categories"] = cats;
  return j;
}

EvalResult eval_result_from_json(const json& j) {
  EvalResult r;
  try {
    r.overall = stats_from_json(j.at("overall"));
    for (const auto& [name, stats] : j.at("categories").items())
      r.categories[name] = stats_from_json(stats);
  } catch (const json::exception& e) {
    fail("eval report: ", e.what());
  }
  return r;
}

void write_eval_dataset(const std::filesystem::path& path,
                        std::span<const EvalItem> items) {
  std::string content;
  for (const EvalItem& item : items) {
    item.validate();
    json j;
    j["prompt"] = item.prompt;
    j["trajectories"] = item.trajectories;
    j["category"] = item.category;
    content += j.dump();
    content += '\n';
  }
  write_file_atomic(path, content);
}

std::vector<EvalItem> read_eval_dataset(const std::filesystem::path& path) {
  const std::string content = read_file(path);
  std::vector<EvalItem> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    ++line_no;
    if (end > start) {
      json j;
      try {
        j = json::parse(content.substr(start, end - start));
      } catch (const json::exception& e) {
        fail("eval dataset ", path.string(), " line ", line_no, ": ", e.what());
      }
      EvalItem item;
      try {
        item.prompt = j.at("prompt").get<Tokens>();
        item.trajectories = j.at("trajectories").get<std::vector<Tokens>>();
        item.category = j.at("category").get<std::string>();
      } catch (const json::exception& e) {
        fail("eval dataset ", path.string(), " line ", line_no, ": ", e.what());
      }
      try {
        item.validate();
      } catch (const Error& e) {
        fail("eval dataset ", path.string(), " line ", line_no, ": ", e.what());
      }
      out.push_back(std::move(item));
    }
    if (end == content.size()) break;
    start = end + 1;
  }
  return out;
}

}  // namespace rmlab
