#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rmlab/policy.hpp"
#include "rmlab/scorer.hpp"

#include "json.hpp"

namespace rmlab {

// Trajectories are ordered best to worst; at least three.
struct EvalItem {
  Tokens prompt;
  std::vector<Tokens> trajectories;
  std::string category;

  void validate() const;
};

struct CategoryStats {
  std::size_t count = 0;
  std::size_t wins = 0;
  std::size_t ties = 0;
  double accuracy = 0;
};

struct EvalResult {
  CategoryStats overall;
  std::map<std::string, CategoryStats> categories;
};

// For every item, scores rank-2 and rank-3 against rank-1 as reference; a win
// is rank-2 scoring strictly higher, an exact score tie counts 0.5 and is
// tallied separately.
EvalResult preference_accuracy(const RewardScorer& rm,
                               std::span<const EvalItem> items,
                               std::size_t workers = 1);

// Index of the highest-scoring candidate; ties resolve to the smallest index.
std::size_t best_of_n(const RewardScorer& rm, std::span<const Token> prompt,
                      std::span<const Token> reference,
                      std::span<const Tokens> candidates);

// Fixed column order, accuracies with 4 decimals, categories sorted; byte
// deterministic for identical results.
std::string eval_report_text(const EvalResult& result);
nlohmann::json eval_report_json(const EvalResult& result);
EvalResult eval_result_from_json(const nlohmann::json& j);

void write_eval_dataset(const std::filesystem::path& path,
                        std::span<const EvalItem> items);
std::vector<EvalItem> read_eval_dataset(const std::filesystem::path& path);

}  // namespace rmlab
