#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "prefopt/core.hpp"
#include "prefopt/pairgen.hpp"
#include "prefopt/policy.hpp"
#include "prefopt/reward.hpp"

namespace prefopt {

struct CategoryStats {
  std::size_t correct_pairs = 0;
  std::size_t n_pairs = 0;
  std::size_t samples_all_correct = 0;
  std::size_t n_samples = 0;

  double acc() const;       // correct_pairs / n_pairs
  double acc_plus() const;  // samples_all_correct / n_samples

  bool operator==(const CategoryStats&) const = default;
};

/// ACC weights overall by pair count, ACC+ by sample count.
struct BenchReport {
  std::map<Category, CategoryStats> per_category;
  CategoryStats overall;
  std::vector<std::string> warnings;  // items excluded for having no pairs

  bool operator==(const BenchReport&) const = default;
};

/// A pair counts as correct only when score(chosen) > score(rejected).
BenchReport evaluate_scores(const Dataset& bench, const RewardTable& scores);

BenchReport eval_reward_model(const RewardModelParams& rm, const Dataset& bench, CritiqueSource mode,
                              std::size_t max_len = 32);

/// Fraction of pairs with logratio(y_w) > logratio(y_l); ties count as wrong.
double implicit_reward_accuracy(const PolicyParams& policy, const PolicyParams& ref,
                                const std::vector<ComparisonPair>& pairs);

void write_report_json(std::ostream& out, const BenchReport& report);
void write_report_csv(std::ostream& out, const BenchReport& report);

}  // namespace prefopt
