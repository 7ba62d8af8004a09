#include "prefopt/losses.hpp"

#include <cmath>

#include "prefopt/errors.hpp"

namespace prefopt {

void AlignmentConfig::validate() const {
  scaling.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be finite and >= 0");
  if (!(beta_vision > 0.0) || !std::isfinite(beta_vision)) {
    throw ValidationError("beta_vision must be finite and > 0");
  }
  if (!(sft_weight >= 0.0) || !std::isfinite(sft_weight)) {
    throw ValidationError("sft_weight must be finite and >= 0");
  }
}

double neg_log_sigmoid(double z) {
  // softplus(−z)
  return z >= 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double logratio(const PolicyParams& policy, const PolicyParams& ref, const QueryFeatures& query,
                const TokenSeq& y) {
  return logprob(policy, query.features, y) - logprob(ref, query.features, y);
}

namespace {

struct RatioGrad {
  double value = 0.0;  // logratio
  Gradient grad;       // ∂logratio/∂θ (reference is constant)
};

RatioGrad logratio_grad(const PolicyParams& policy, const PolicyParams& ref, const QueryFeatures& query,
                        const TokenSeq& y) {
  auto lp = logprob_grad(policy, query.features, y);
  return {lp.value - logprob(ref, query.features, y), std::move(lp.grad)};
}

void check_pairs(const std::vector<ComparisonPair>& pairs) {
  if (pairs.empty()) throw ParameterError("loss needs at least one pair");
}

// Shared evaluator for the DPO family. `beta_of` resolves the main-term scale;
// the vision term is skipped entirely when lambda == 0.
template <typename BetaOf>
LossReport dpo_family(const PolicyParams& policy, const PolicyParams& ref, const std::vector<ComparisonPair>& pairs,
                      BetaOf&& beta_of, double lambda, double beta_vision) {
  check_pairs(pairs);
  if (ref.vocab_size() != policy.vocab_size() || ref.cond_dim() != policy.cond_dim()) {
    throw ShapeError("policy and reference shapes differ");
  }
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  LossReport report;
  report.grad = Gradient(policy.param_count());
  report.per_pair.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    if (lambda > 0.0 && !p.vision_query) {
      throw ParameterError("pair " + std::to_string(i) + " has no vision query but lambda > 0");
    }
    const double b = beta_of(p);
    const auto win = logratio_grad(policy, ref, p.query, p.chosen);
    const auto lose = logratio_grad(policy, ref, p.query, p.rejected);
    const double u = win.value - lose.value;
    double loss = neg_log_sigmoid(b * u);
    // d/du [−log σ(βu)] = −β·σ(−βu)
    const double du = -b * sigmoid(-b * u);
    report.grad.add_scaled(win.grad, du * inv_n);
    report.grad.add_scaled(lose.grad, -du * inv_n);

    if (lambda > 0.0) {
      const auto lose_v = logratio_grad(policy, ref, *p.vision_query, p.rejected);
      const double uv = win.value - lose_v.value;
      loss += lambda * neg_log_sigmoid(beta_vision * uv);
      const double duv = -lambda * beta_vision * sigmoid(-beta_vision * uv);
      report.grad.add_scaled(win.grad, duv * inv_n);
      report.grad.add_scaled(lose_v.grad, -duv * inv_n);
    }
    report.per_pair.push_back({i, loss, b});
    report.value += loss;
  }
  report.value *= inv_n;
  report.alignment_term = report.value;
  return report;
}

}  // namespace

LossReport dpo_loss(const PolicyParams& policy, const PolicyParams& ref, const std::vector<ComparisonPair>& pairs,
                    double beta_fixed) {
  if (!(beta_fixed > 0.0) || !std::isfinite(beta_fixed)) throw ParameterError("beta must be finite and > 0");
  return dpo_family(policy, ref, pairs, [beta_fixed](const ComparisonPair&) { return beta_fixed; }, 0.0, 0.0);
}

LossReport mm_dpo_loss(const PolicyParams& policy, const PolicyParams& ref,
                       const std::vector<ComparisonPair>& pairs, const ScalingConfig& cfg) {
  cfg.validate();
  return dpo_family(policy, ref, pairs, [&cfg](const ComparisonPair& p) { return beta(cfg, p.delta); }, 0.0, 0.0);
}

LossReport vision_dpo_loss(const PolicyParams& policy, const PolicyParams& ref,
                           const std::vector<ComparisonPair>& pairs, const ScalingConfig& cfg, double lambda,
                           double beta_vision) {
  cfg.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ParameterError("lambda must be finite and >= 0");
  if (lambda > 0.0 && (!(beta_vision > 0.0) || !std::isfinite(beta_vision))) {
    throw ParameterError("beta_vision must be finite and > 0");
  }
  return dpo_family(policy, ref, pairs, [&cfg](const ComparisonPair& p) { return beta(cfg, p.delta); }, lambda,
                    beta_vision);
}

LossReport sft_loss(const PolicyParams& policy, const std::vector<ComparisonPair>& pairs) {
  check_pairs(pairs);
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  LossReport report;
  report.grad = Gradient(policy.param_count());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const auto lp = logprob_grad(policy, p.query.features, p.chosen);
    const double inv_len = 1.0 / static_cast<double>(p.chosen.size());
    const double loss = -lp.value * inv_len;
    report.grad.add_scaled(lp.grad, -inv_len * inv_n);
    report.per_pair.push_back({i, loss, 0.0});
    report.value += loss;
  }
  report.value *= inv_n;
  report.sft_term = report.value;
  return report;
}

LossReport combined_loss(const PolicyParams& policy, const PolicyParams& ref,
                         const std::vector<ComparisonPair>& pairs, const AlignmentConfig& cfg) {
  cfg.validate();
  LossReport report = cfg.lambda > 0.0
                          ? vision_dpo_loss(policy, ref, pairs, cfg.scaling, cfg.lambda, cfg.beta_vision)
                          : mm_dpo_loss(policy, ref, pairs, cfg.scaling);
  if (cfg.sft_weight == 0.0) return report;
  const LossReport sft = sft_loss(policy, pairs);
  report.grad.add_scaled(sft.grad, cfg.sft_weight);
  for (std::size_t i = 0; i < pairs.size(); ++i) report.per_pair[i].loss += cfg.sft_weight * sft.per_pair[i].loss;
  report.sft_term = cfg.sft_weight * sft.value;
  report.value = report.alignment_term + report.sft_term;
  return report;
}

}  // namespace prefopt
