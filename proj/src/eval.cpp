#include "prefopt/eval.hpp"

#include <ostream>

#include <json.hpp>

#include "prefopt/errors.hpp"
#include "prefopt/losses.hpp"

namespace prefopt {

using nlohmann::ordered_json;

double CategoryStats::acc() const {
  return n_pairs == 0 ? 0.0 : static_cast<double>(correct_pairs) / static_cast<double>(n_pairs);
}

double CategoryStats::acc_plus() const {
  return n_samples == 0 ? 0.0 : static_cast<double>(samples_all_correct) / static_cast<double>(n_samples);
}

BenchReport evaluate_scores(const Dataset& bench, const RewardTable& scores) {
  BenchReport report;
  for (const auto& item : bench.items) {
    const auto set = all_pairs(item);
    if (set.pairs.empty()) {
      report.warnings.push_back("item '" + item.query.id + "' yields no comparison pairs; excluded");
      continue;
    }
    const auto scored = attach_margins(set.pairs, scores);
    std::size_t correct = 0;
    for (const auto& p : scored) {
      if (p.delta > 0.0) ++correct;
    }
    auto& stats = report.per_category[item.query.category];
    for (auto* s : {&stats, &report.overall}) {
      s->correct_pairs += correct;
      s->n_pairs += scored.size();
      s->n_samples += 1;
      if (correct == scored.size()) s->samples_all_correct += 1;
    }
  }
  return report;
}

BenchReport eval_reward_model(const RewardModelParams& rm, const Dataset& bench, CritiqueSource mode,
                              std::size_t max_len) {
  return evaluate_scores(bench, to_reward_table(score_dataset(rm, bench, mode, max_len)));
}

double implicit_reward_accuracy(const PolicyParams& policy, const PolicyParams& ref,
                                const std::vector<ComparisonPair>& pairs) {
  if (pairs.empty()) return 0.0;
  std::size_t wins = 0;
  for (const auto& p : pairs) {
    if (logratio(policy, ref, p.query, p.chosen) > logratio(policy, ref, p.query, p.rejected)) ++wins;
  }
  return static_cast<double>(wins) / static_cast<double>(pairs.size());
}

namespace {

ordered_json stats_json(const CategoryStats& s) {
  return {{"acc", s.acc()},
          {"acc_plus", s.acc_plus()},
          {"correct_pairs", s.correct_pairs},
          {"n_pairs", s.n_pairs},
          {"samples_all_correct", s.samples_all_correct},
          {"n_samples", s.n_samples}};
}

}  // namespace

void write_report_json(std::ostream& out, const BenchReport& report) {
  ordered_json j;
  ordered_json cats = ordered_json::object();
  for (const auto& [cat, stats] : report.per_category) cats[std::string(to_string(cat))] = stats_json(stats);
  j["per_category"] = std::move(cats);
  j["overall"] = stats_json(report.overall);
  j["warnings"] = report.warnings;
  out << j.dump(2) << '\n';
}

void write_report_csv(std::ostream& out, const BenchReport& report) {
  out << "category,acc,acc_plus,correct_pairs,n_pairs,samples_all_correct,n_samples\n";
  auto row = [&out](std::string_view name, const CategoryStats& s) {
    out << name << ',' << ordered_json(s.acc()).dump() << ',' << ordered_json(s.acc_plus()).dump() << ','
        << s.correct_pairs << ',' << s.n_pairs << ',' << s.samples_all_correct << ',' << s.n_samples << '\n';
  };
  for (const auto& [cat, stats] : report.per_category) row(to_string(cat), stats);
  row("overall", report.overall);
}

}  // namespace prefopt
