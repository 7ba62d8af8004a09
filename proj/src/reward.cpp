#include "prefopt/reward.hpp"

#include <cmath>
#include <random>
#include <string>

#include <json.hpp>

#include "prefopt/errors.hpp"
#include "prefopt/losses.hpp"

namespace prefopt {

using nlohmann::json;

RewardModelParams::RewardModelParams(std::size_t vocab_size, std::size_t feature_dim)
    : critique_head(vocab_size, feature_dim + vocab_size), score_weights(2 * vocab_size + feature_dim + 1, 0.0) {}

void RewardModelParams::validate() const {
  const std::size_t V = vocab_size();
  if (critique_head.cond_dim() < V) throw ShapeError("critique head conditioning is narrower than the vocabulary");
  if (score_weights.size() != 2 * V + feature_dim() + 1) {
    throw ShapeError("score weights have " + std::to_string(score_weights.size()) + " entries, expected " +
                     std::to_string(2 * V + feature_dim() + 1));
  }
  if (!critique_head.all_finite()) throw ValidationError("critique head has non-finite entries");
  for (double w : score_weights) {
    if (!std::isfinite(w)) throw ValidationError("score weights have non-finite entries");
  }
}

std::vector<double> RewardModelParams::flat() const {
  std::vector<double> out(critique_head.flat().begin(), critique_head.flat().end());
  out.insert(out.end(), score_weights.begin(), score_weights.end());
  return out;
}

void RewardModelParams::set_flat(std::span<const double> values) {
  if (values.size() != param_count()) throw ShapeError("reward model flat buffer has the wrong length");
  const std::size_t head = critique_head.param_count();
  std::copy(values.begin(), values.begin() + head, critique_head.flat().begin());
  std::copy(values.begin() + head, values.end(), score_weights.begin());
}

void RewardModelParams::apply_step(const Gradient& grad, double learning_rate) {
  if (grad.size() != param_count()) throw ShapeError("gradient does not match reward model parameters");
  auto head = critique_head.flat();
  for (std::size_t i = 0; i < head.size(); ++i) head[i] -= learning_rate * grad[i];
  for (std::size_t i = 0; i < score_weights.size(); ++i) {
    score_weights[i] -= learning_rate * grad[head.size() + i];
  }
}

RewardModelParams init_reward_model(std::size_t vocab_size, std::size_t feature_dim, std::uint64_t seed,
                                    double scale) {
  RewardModelParams rm(vocab_size, feature_dim);
  rm.critique_head = init_policy(vocab_size, feature_dim + vocab_size, seed, scale);
  std::mt19937_64 engine(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal(0.0, scale);
  for (double& w : rm.score_weights) w = normal(engine);
  return rm;
}

std::vector<double> bag_of_tokens(const TokenSeq& seq, std::size_t vocab_size) {
  std::vector<double> bag(vocab_size, 0.0);
  if (seq.empty()) return bag;
  validate_tokens(seq, vocab_size, "bag");
  const double inv = 1.0 / static_cast<double>(seq.size());
  for (TokenId t : seq) bag[t] += inv;
  return bag;
}

namespace {

void check_query(const RewardModelParams& rm, const QueryFeatures& query) {
  if (query.features.size() != rm.feature_dim()) {
    throw ShapeError("query has " + std::to_string(query.features.size()) + " features, reward model expects " +
                     std::to_string(rm.feature_dim()));
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

std::vector<double> score_features(const RewardModelParams& rm, const QueryFeatures& query, const TokenSeq& y,
                                   const TokenSeq& critique) {
  check_query(rm, query);
  const std::size_t V = rm.vocab_size();
  auto phi = bag_of_tokens(y, V);
  const auto cbag = bag_of_tokens(critique, V);
  phi.insert(phi.end(), cbag.begin(), cbag.end());
  phi.insert(phi.end(), query.features.begin(), query.features.end());
  phi.push_back(1.0);
  return phi;
}

std::vector<double> critique_condition(const RewardModelParams& rm, const QueryFeatures& query, const TokenSeq& y) {
  check_query(rm, query);
  std::vector<double> cond = query.features;
  const auto ybag = bag_of_tokens(y, rm.vocab_size());
  cond.insert(cond.end(), ybag.begin(), ybag.end());
  return cond;
}

double score_response(const RewardModelParams& rm, const QueryFeatures& query, const TokenSeq& y,
                      const TokenSeq& critique) {
  if (y.empty()) throw ParameterError("cannot score an empty response");
  rm.validate();
  return dot(rm.score_weights, score_features(rm, query, y, critique));
}

BlockLoss critique_loss(const RewardModelParams& rm, const QueryFeatures& query, const TokenSeq& y,
                        const GroundTruthCritique& target) {
  if (target.tokens.empty()) throw ParameterError("critique target is empty");
  const auto cond = critique_condition(rm, query, y);
  auto lp = logprob_grad(rm.critique_head, cond, target.tokens);
  lp.grad *= -1.0;
  return {-lp.value, std::move(lp.grad)};
}

BlockLoss scoring_loss(const RewardModelParams& rm, const QueryFeatures& query, const TokenSeq& y_w,
                       const GroundTruthCritique& c_w, const TokenSeq& y_l, const GroundTruthCritique& c_l) {
  if (y_w.empty() || y_l.empty()) throw ParameterError("cannot score an empty response");
  rm.validate();
  const auto phi_w = score_features(rm, query, y_w, c_w.tokens);
  const auto phi_l = score_features(rm, query, y_l, c_l.tokens);
  const double margin = dot(rm.score_weights, phi_w) - dot(rm.score_weights, phi_l);
  BlockLoss out;
  out.value = neg_log_sigmoid(margin);
  out.grad = Gradient(rm.score_weights.size());
  const double coeff = -sigmoid(-margin);
  for (std::size_t i = 0; i < phi_w.size(); ++i) out.grad[i] = coeff * (phi_w[i] - phi_l[i]);
  return out;
}

BlockLoss plain_reward_loss(const RewardModelParams& rm, const QueryFeatures& query, const TokenSeq& y_w,
                            const TokenSeq& y_l) {
  const GroundTruthCritique none{};
  return scoring_loss(rm, query, y_w, none, y_l, none);
}

std::vector<RewardComparison> reward_comparisons(const Dataset& dataset) {
  std::vector<RewardComparison> out;
  for (const auto& item : dataset.items) {
    for (const auto& p : all_pairs(item).pairs) {
      const auto& w = item.responses[p.chosen_idx];
      const auto& l = item.responses[p.rejected_idx];
      out.push_back({item.query, w.tokens, {w.critique}, l.tokens, {l.critique}});
    }
  }
  return out;
}

RewardLossReport total_loss(const RewardModelParams& rm, const std::vector<RewardComparison>& batch,
                            RewardObjective objective) {
  if (batch.empty()) throw ParameterError("reward loss needs at least one comparison");
  const std::size_t head = rm.critique_head.param_count();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  RewardLossReport report;
  report.grad = Gradient(rm.param_count());
  for (const auto& cmp : batch) {
    const BlockLoss score =
        objective == RewardObjective::Total
            ? scoring_loss(rm, cmp.query, cmp.chosen, cmp.chosen_critique, cmp.rejected, cmp.rejected_critique)
            : plain_reward_loss(rm, cmp.query, cmp.chosen, cmp.rejected);
    report.score_term += score.value * inv_n;
    for (std::size_t i = 0; i < score.grad.size(); ++i) report.grad[head + i] += score.grad[i] * inv_n;

    if (objective == RewardObjective::Total) {
      // Mean over the 2n critiques in the batch.
      auto add_critique = [&](const TokenSeq& y, const GroundTruthCritique& target) {
        const BlockLoss crit = critique_loss(rm, cmp.query, y, target);
        report.critique_term += crit.value * 0.5 * inv_n;
        for (std::size_t i = 0; i < head; ++i) report.grad[i] += crit.grad[i] * 0.5 * inv_n;
      };
      add_critique(cmp.chosen, cmp.chosen_critique);
      add_critique(cmp.rejected, cmp.rejected_critique);
    }
  }
  report.value = report.critique_term + report.score_term;
  return report;
}

ScoredResponse infer(const RewardModelParams& rm, const QueryFeatures& query, const TokenSeq& y,
                     std::size_t max_len) {
  if (y.empty()) throw ParameterError("cannot score an empty response");
  ScoredResponse out;
  out.response = y;
  out.critique = greedy_decode(rm.critique_head, critique_condition(rm, query, y), max_len);
  out.score = score_response(rm, query, y, out.critique);
  return out;
}

CritiqueSource parse_critique_source(std::string_view name) {
  if (name == "inferred") return CritiqueSource::Inferred;
  if (name == "gt") return CritiqueSource::GroundTruth;
  if (name == "none") return CritiqueSource::None;
  throw ValidationError("unknown critique mode '" + std::string(name) + "' (expected inferred, gt or none)");
}

std::string_view to_string(CritiqueSource source) {
  switch (source) {
    case CritiqueSource::Inferred: return "inferred";
    case CritiqueSource::GroundTruth: return "gt";
    case CritiqueSource::None: return "none";
  }
  return "?";
}

std::vector<ResponseScore> score_dataset(const RewardModelParams& rm, const Dataset& dataset, CritiqueSource source,
                                         std::size_t max_len) {
  std::vector<ResponseScore> out;
  for (const auto& item : dataset.items) {
    for (std::size_t i = 0; i < item.responses.size(); ++i) {
      const auto& r = item.responses[i];
      ResponseScore s;
      s.query_id = item.query.id;
      s.response_idx = static_cast<std::uint32_t>(i);
      switch (source) {
        case CritiqueSource::Inferred: {
          auto scored = infer(rm, item.query, r.tokens, max_len);
          s.critique = std::move(scored.critique);
          s.score = scored.score;
          break;
        }
        case CritiqueSource::GroundTruth:
          s.critique = r.critique;
          s.score = score_response(rm, item.query, r.tokens, s.critique);
          break;
        case CritiqueSource::None:
          s.score = score_response(rm, item.query, r.tokens, {});
          break;
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

RewardTable to_reward_table(const std::vector<ResponseScore>& scores) {
  RewardTable table;
  for (const auto& s : scores) table[{s.query_id, s.response_idx}] = s.score;
  return table;
}

void write_scores(std::ostream& out, const std::vector<ResponseScore>& scores) {
  for (const auto& s : scores) {
    json obj{{"query_id", s.query_id},
             {"response_idx", s.response_idx},
             {"critique_tokens", s.critique},
             {"score", s.score}};
    out << obj.dump() << '\n';
  }
}

std::vector<ResponseScore> read_scores(std::istream& in) {
  std::vector<ResponseScore> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto obj = json::parse(text);
      ResponseScore s;
      s.query_id = obj.at("query_id").get<std::string>();
      s.response_idx = obj.at("response_idx").get<std::uint32_t>();
      s.critique = obj.at("critique_tokens").get<TokenSeq>();
      s.score = obj.at("score").get<double>();
      if (!std::isfinite(s.score)) throw ValidationError("line " + std::to_string(line) + ": score is not finite");
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace prefopt
