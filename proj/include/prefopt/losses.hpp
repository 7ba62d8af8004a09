#pragma once

#include <cstddef>
#include <vector>

#include "prefopt/pairgen.hpp"
#include "prefopt/policy.hpp"
#include "prefopt/scaling.hpp"

namespace prefopt {

struct PairTerm {
  std::size_t index = 0;  // position in the input pair list
  double loss = 0.0;      // this pair's contribution before averaging
  double beta = 0.0;      // resolved scale of the main DPO term
};

/// A batch objective: value is the mean of per_pair losses, grad is the
/// gradient of value with respect to the trainable policy.
struct LossReport {
  double value = 0.0;
  Gradient grad;
  std::vector<PairTerm> per_pair;
  double alignment_term = 0.0;  // DPO-family part of value
  double sft_term = 0.0;        // weighted SFT part of value
};

/// Everything that shapes the policy objective apart from the data.
struct AlignmentConfig {
  ScalingConfig scaling;
  double lambda = 0.0;       // weight of the vision-negative term
  double beta_vision = 0.1;  // fixed scale of the vision-negative term
  double sft_weight = 0.0;

  void validate() const;

  bool operator==(const AlignmentConfig&) const = default;
};

/// −log σ(z), evaluated without overflow.
double neg_log_sigmoid(double z);
double sigmoid(double z);

/// log π(y|x) − log π_ref(y|x)
double logratio(const PolicyParams& policy, const PolicyParams& ref, const QueryFeatures& query,
                const TokenSeq& y);

/// Mean over pairs of −log σ(β·(logratio(y_w) − logratio(y_l))) with a fixed β.
LossReport dpo_loss(const PolicyParams& policy, const PolicyParams& ref, const std::vector<ComparisonPair>& pairs,
                    double beta_fixed);

/// As dpo_loss with the per-pair β = beta(cfg, δ).
LossReport mm_dpo_loss(const PolicyParams& policy, const PolicyParams& ref,
                       const std::vector<ComparisonPair>& pairs, const ScalingConfig& cfg);

/// mm_dpo_loss plus λ·(−log σ(β_vision·(logratio(x, y_w) − logratio(x_v, y_l)))).
LossReport vision_dpo_loss(const PolicyParams& policy, const PolicyParams& ref,
                           const std::vector<ComparisonPair>& pairs, const ScalingConfig& cfg, double lambda,
                           double beta_vision);

/// Mean length-normalised NLL of the chosen responses.
LossReport sft_loss(const PolicyParams& policy, const std::vector<ComparisonPair>& pairs);

/// vision_dpo_loss (mm_dpo_loss when λ = 0) + sft_weight·sft_loss.
LossReport combined_loss(const PolicyParams& policy, const PolicyParams& ref,
                         const std::vector<ComparisonPair>& pairs, const AlignmentConfig& cfg);

}  // namespace prefopt
