#pragma once

namespace prefopt {

/// Margin-dependent DPO temperature:
///
///   β(δ) = β_ori · (1 + w · (1 − e^{−kδ})),  clamped to [β_ori, (1 + w)·β_ori].
///
/// Negative margins therefore land on the floor β_ori.
struct ScalingConfig {
  double beta_ori = 0.1;
  double w = 0.5;
  double k = 0.5;

  /// Throws ValidationError naming the offending field.
  void validate() const;

  double beta_min() const { return beta_ori; }
  double beta_max() const { return (1.0 + w) * beta_ori; }

  bool operator==(const ScalingConfig&) const = default;
};

/// Throws ParameterError for non-finite delta.
double beta(const ScalingConfig& cfg, double delta);

}  // namespace prefopt
