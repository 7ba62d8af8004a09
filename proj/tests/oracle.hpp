// Extended-precision reimplementations of the forward passes, written from
// the model definitions without touching the library's evaluation code.
// Central differences at h = 1e-5 on these have roundoff near 1e-14, so
// gradient entries down to 1e-8 can be checked at 1e-4 relative error.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "prefopt/losses.hpp"
#include "prefopt/reward.hpp"
#include "support.hpp"

namespace prefopt::testing {

using LD = long double;
using LDVec = std::vector<LD>;

inline LDVec widen(std::span<const double> v) { return LDVec(v.begin(), v.end()); }

inline std::vector<double> ld_central_differences(const LDVec& x, const std::function<LD(const LDVec&)>& f,
                                                  LD h = 1e-5L) {
  std::vector<double> out(x.size());
  LDVec probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const LD up = f(probe);
    probe[i] = x[i] - h;
    const LD down = f(probe);
    probe[i] = x[i];
    out[i] = static_cast<double>((up - down) / (2 * h));
  }
  return out;
}

inline LD ld_log_softmax_at(const LDVec& z, std::size_t k) {
  const LD m = *std::max_element(z.begin(), z.end());
  LD s = 0;
  for (LD v : z) s += std::exp(v - m);
  return z[k] - m - std::log(s);
}

/// log p(y | cond) for a bigram policy stored as (s, T, U) in `theta`.
inline LD ld_logprob(const LDVec& theta, std::size_t V, std::size_t c, const std::vector<double>& cond,
                     const TokenSeq& y) {
  LDVec base(V, 0);
  for (std::size_t v = 0; v < V; ++v)
    for (std::size_t k = 0; k < c; ++k) base[v] += theta[V + V * V + v * c + k] * static_cast<LD>(cond[k]);
  LD total = 0;
  LDVec z(V);
  for (std::size_t t = 0; t < y.size(); ++t) {
    for (std::size_t v = 0; v < V; ++v) z[v] = base[v] + (t == 0 ? theta[v] : theta[V + y[t - 1] * V + v]);
    total += ld_log_softmax_at(z, y[t]);
  }
  return total;
}

inline LD ld_softplus_neg(LD z) { return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z)); }

inline LD ld_beta(const ScalingConfig& cfg, double delta) {
  const LD b0 = cfg.beta_ori;
  LD raw = b0 * (1 + static_cast<LD>(cfg.w) * (1 - std::exp(-static_cast<LD>(cfg.k) * delta)));
  return std::clamp(raw, b0, b0 * (1 + static_cast<LD>(cfg.w)));
}

struct PolicyShape {
  std::size_t V;
  std::size_t c;
  LDVec ref;
};

inline LD ld_logratio(const LDVec& theta, const PolicyShape& s, const QueryFeatures& q, const TokenSeq& y) {
  return ld_logprob(theta, s.V, s.c, q.features, y) - ld_logprob(s.ref, s.V, s.c, q.features, y);
}

/// Mean over pairs of the DPO family objective with per-pair β and an optional
/// vision-negative term, plus sft_weight times the length-normalised NLL.
inline LD ld_policy_objective(const LDVec& theta, const PolicyShape& s, const std::vector<ComparisonPair>& pairs,
                              const std::function<LD(const ComparisonPair&)>& beta_of, LD lambda, LD beta_vision,
                              LD sft_weight, bool alignment = true) {
  LD total = 0;
  for (const auto& p : pairs) {
    LD loss = 0;
    if (alignment) {
      const LD rw = ld_logratio(theta, s, p.query, p.chosen);
      loss += ld_softplus_neg(beta_of(p) * (rw - ld_logratio(theta, s, p.query, p.rejected)));
      if (lambda > 0) loss += lambda * ld_softplus_neg(beta_vision * (rw - ld_logratio(theta, s, *p.vision_query, p.rejected)));
    }
    if (sft_weight != 0) {
      loss += sft_weight * -ld_logprob(theta, s.V, s.c, p.query.features, p.chosen) / static_cast<LD>(p.chosen.size());
    }
    total += loss;
  }
  return total / static_cast<LD>(pairs.size());
}

inline std::vector<double> ld_bag(const TokenSeq& seq, std::size_t V) {
  std::vector<double> bag(V, 0.0);
  for (TokenId t : seq) bag[t] += 1.0 / static_cast<double>(seq.size());
  return bag;
}

struct RewardShape {
  std::size_t V;
  std::size_t d;
  std::size_t head() const { return V + V * V + V * (d + V); }
};

inline LD ld_critique_nll(const LDVec& theta, const RewardShape& s, const QueryFeatures& q, const TokenSeq& y,
                          const TokenSeq& c) {
  std::vector<double> cond = q.features;
  const auto bag = ld_bag(y, s.V);
  cond.insert(cond.end(), bag.begin(), bag.end());
  return -ld_logprob(theta, s.V, s.d + s.V, cond, c);
}

inline LD ld_score(const LDVec& theta, const RewardShape& s, const QueryFeatures& q, const TokenSeq& y,
                   const TokenSeq& c) {
  std::vector<double> phi = ld_bag(y, s.V);
  const auto cb = ld_bag(c, s.V);
  phi.insert(phi.end(), cb.begin(), cb.end());
  phi.insert(phi.end(), q.features.begin(), q.features.end());
  phi.push_back(1.0);
  LD r = 0;
  for (std::size_t i = 0; i < phi.size(); ++i) r += theta[s.head() + i] * static_cast<LD>(phi[i]);
  return r;
}

inline LD ld_bt(const LDVec& theta, const RewardShape& s, const RewardComparison& cmp, bool with_critique) {
  const TokenSeq none;
  const auto& cw = with_critique ? cmp.chosen_critique.tokens : none;
  const auto& cl = with_critique ? cmp.rejected_critique.tokens : none;
  return ld_softplus_neg(ld_score(theta, s, cmp.query, cmp.chosen, cw) - ld_score(theta, s, cmp.query, cmp.rejected, cl));
}

/// Mean critique NLL over the 2n critiques plus mean Bradley-Terry loss.
inline LD ld_reward_total(const LDVec& theta, const RewardShape& s, const std::vector<RewardComparison>& batch,
                          bool plain = false) {
  LD crit = 0, score = 0;
  for (const auto& cmp : batch) {
    score += ld_bt(theta, s, cmp, !plain);
    if (!plain) {
      crit += ld_critique_nll(theta, s, cmp.query, cmp.chosen, cmp.chosen_critique.tokens);
      crit += ld_critique_nll(theta, s, cmp.query, cmp.rejected, cmp.rejected_critique.tokens);
    }
  }
  const LD n = static_cast<LD>(batch.size());
  return crit / (2 * n) + score / n;
}

/// Finite-difference comparison of an analytic gradient against an
/// extended-precision objective evaluated at widened parameters.
inline GradCheck ld_check(std::span<const double> params, const std::vector<double>& analytic,
                          const std::function<LD(const LDVec&)>& f) {
  return compare_gradients(analytic, ld_central_differences(widen(params), f));
}

}  // namespace prefopt::testing
