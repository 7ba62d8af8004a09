#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "prefopt/core.hpp"
#include "prefopt/policy.hpp"

namespace prefopt {

struct ComparisonPair {
  QueryFeatures query;
  TokenSeq chosen;    // y_w
  TokenSeq rejected;  // y_l
  double delta = 0.0; // reward margin r(y_w) − r(y_l)
  std::optional<QueryFeatures> vision_query;  // perturbed x_v for the vision-negative term

  // Provenance: positions in the originating response list (or sample list).
  std::uint32_t chosen_idx = 0;
  std::uint32_t rejected_idx = 0;

  bool operator==(const ComparisonPair&) const = default;
};

struct PairSet {
  std::vector<ComparisonPair> pairs;
  bool all_tied = false;  // every response shared one rank
};

/// One pair per (i < j) with rank_i != rank_j; the smaller rank is chosen.
/// Order is lexicographic in (i, j). Margins are left at 0.
PairSet all_pairs(const RankedResponseSet& set);

/// Pairs for every item of a dataset, concatenated in item order.
std::vector<ComparisonPair> all_pairs(const Dataset& dataset);

/// Reward score per (query id, response index).
using RewardTable = std::map<std::pair<std::string, std::uint32_t>, double>;

/// δ = r(chosen) − r(rejected). Throws LookupError for a missing score.
std::vector<ComparisonPair> attach_margins(std::vector<ComparisonPair> pairs, const RewardTable& scores);

/// alpha·x + (1 − alpha)·x_other, id suffixed "#mix", category of x.
QueryFeatures mixup_query(const QueryFeatures& x, const QueryFeatures& x_other, double alpha);

/// Sets vision_query on every pair by mixing its query with the next item of
/// the dataset (cyclically). Pairs whose query id is not in the dataset throw
/// LookupError.
std::vector<ComparisonPair> attach_vision_negatives(std::vector<ComparisonPair> pairs, const Dataset& dataset,
                                                    double alpha = 0.5);

using ResponseScorer = std::function<double(const QueryFeatures&, const TokenSeq&)>;

struct SelfPairResult {
  std::vector<ComparisonPair> pairs;
  bool degenerate = false;  // all samples scored equal
  std::vector<TokenSeq> samples;
  std::vector<double> scores;
};

inline constexpr std::size_t kDefaultSelfSamples = 8;

/// Draws n_samples responses from the policy, scores them, and emits the
/// single (highest, lowest) pair with δ = score gap. Ties resolve to the
/// earliest sample.
SelfPairResult self_pairs(const PolicyParams& policy, const QueryFeatures& query, std::size_t n_samples,
                          const ResponseScorer& reward, std::uint64_t rng_seed, std::size_t max_len = 32,
                          double temperature = 1.0);

/// Pair dump: {"query_id", "chosen_idx", "rejected_idx", "delta", "vision"} per line.
void write_pairs(std::ostream& out, const std::vector<ComparisonPair>& pairs);

struct PairRecord {
  std::string query_id;
  std::uint32_t chosen_idx = 0;
  std::uint32_t rejected_idx = 0;
  double delta = 0.0;
  bool vision = false;

  bool operator==(const PairRecord&) const = default;
};

std::vector<PairRecord> read_pairs(std::istream& in);

}  // namespace prefopt
