#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "prefopt/core.hpp"
#include "prefopt/pairgen.hpp"
#include "prefopt/policy.hpp"

namespace prefopt {

/// Critique-based reward model over vocabulary V and feature dimension d.
///
/// The critique head is a PolicyParams conditioned on [x; bag(y)] (c = d + V).
/// The scoring head is linear in φ(x, y, c) = [bag(y); bag(c); x; 1], where
/// bag(·) is the mean one-hot over tokens (zero for an empty sequence).
/// Canonical flat order: critique head parameters, then score weights.
struct RewardModelParams {
  PolicyParams critique_head;
  std::vector<double> score_weights;  // length 2V + d + 1

  RewardModelParams() = default;
  /// Zero-initialised model (uniform critique head, zero scorer).
  RewardModelParams(std::size_t vocab_size, std::size_t feature_dim);

  std::size_t vocab_size() const { return critique_head.vocab_size(); }
  std::size_t feature_dim() const { return critique_head.cond_dim() - critique_head.vocab_size(); }
  std::size_t param_count() const { return critique_head.param_count() + score_weights.size(); }

  void validate() const;
  std::vector<double> flat() const;
  void set_flat(std::span<const double> values);
  void apply_step(const Gradient& grad, double learning_rate);

  bool operator==(const RewardModelParams&) const = default;
};

RewardModelParams init_reward_model(std::size_t vocab_size, std::size_t feature_dim, std::uint64_t seed,
                                    double scale = 0.02);

/// Mean one-hot over tokens; zero vector for an empty sequence.
std::vector<double> bag_of_tokens(const TokenSeq& seq, std::size_t vocab_size);

/// [bag(y); bag(c); x; 1]
std::vector<double> score_features(const RewardModelParams& rm, const QueryFeatures& query, const TokenSeq& y,
                                   const TokenSeq& critique);

/// [x; bag(y)]
std::vector<double> critique_condition(const RewardModelParams& rm, const QueryFeatures& query, const TokenSeq& y);

/// Critique text that came from the annotation data. Training paths only
/// accept this type, so a generated critique cannot be fed to the scorer
/// during training by accident.
struct GroundTruthCritique {
  TokenSeq tokens;
};

struct ScoredResponse {
  TokenSeq response;
  TokenSeq critique;
  double score = 0.0;
};

double score_response(const RewardModelParams& rm, const QueryFeatures& query, const TokenSeq& y,
                      const TokenSeq& critique);

/// Loss value with a gradient over one parameter block.
struct BlockLoss {
  double value = 0.0;
  Gradient grad;
};

/// −Σ_t log π(c_t | c_<t, x, y). Gradient covers the critique head only.
BlockLoss critique_loss(const RewardModelParams& rm, const QueryFeatures& query, const TokenSeq& y,
                        const GroundTruthCritique& target);

/// −log σ(r(x, y_w, c_w) − r(x, y_l, c_l)). Gradient covers the score weights only.
BlockLoss scoring_loss(const RewardModelParams& rm, const QueryFeatures& query, const TokenSeq& y_w,
                       const GroundTruthCritique& c_w, const TokenSeq& y_l, const GroundTruthCritique& c_l);

/// Bradley-Terry loss on the responses alone (critique bags empty).
BlockLoss plain_reward_loss(const RewardModelParams& rm, const QueryFeatures& query, const TokenSeq& y_w,
                            const TokenSeq& y_l);

struct RewardComparison {
  QueryFeatures query;
  TokenSeq chosen;
  GroundTruthCritique chosen_critique;
  TokenSeq rejected;
  GroundTruthCritique rejected_critique;
};

/// Training comparisons from the ranked sets, using annotated critiques.
std::vector<RewardComparison> reward_comparisons(const Dataset& dataset);

enum class RewardObjective {
  Total,  // critique + scoring
  Plain,  // Bradley-Terry on responses only
};

struct RewardLossReport {
  double value = 0.0;
  double critique_term = 0.0;
  double score_term = 0.0;
  Gradient grad;  // over all rm parameters, canonical order
};

/// Total: mean critique loss over both critiques of every comparison plus mean
/// scoring loss. Plain: mean plain_reward_loss (critique gradient zero).
RewardLossReport total_loss(const RewardModelParams& rm, const std::vector<RewardComparison>& batch,
                            RewardObjective objective = RewardObjective::Total);

/// Greedy critique from the head, then the score of (x, y, ĉ).
ScoredResponse infer(const RewardModelParams& rm, const QueryFeatures& query, const TokenSeq& y,
                     std::size_t max_len = 32);

enum class CritiqueSource { Inferred, GroundTruth, None };

CritiqueSource parse_critique_source(std::string_view name);
std::string_view to_string(CritiqueSource source);

struct ResponseScore {
  std::string query_id;
  std::uint32_t response_idx = 0;
  TokenSeq critique;
  double score = 0.0;

  bool operator==(const ResponseScore&) const = default;
};

/// Scores every response in the dataset with the given critique source.
std::vector<ResponseScore> score_dataset(const RewardModelParams& rm, const Dataset& dataset, CritiqueSource source,
                                         std::size_t max_len = 32);

RewardTable to_reward_table(const std::vector<ResponseScore>& scores);

/// {"query_id", "response_idx", "critique_tokens", "score"} per line.
void write_scores(std::ostream& out, const std::vector<ResponseScore>& scores);
std::vector<ResponseScore> read_scores(std::istream& in);

}  // namespace prefopt
