#include "prefopt/scaling.hpp"

#include <algorithm>
#include <cmath>

#include "prefopt/errors.hpp"

namespace prefopt {

void ScalingConfig::validate() const {
  if (!(beta_ori > 0.0) || !std::isfinite(beta_ori)) throw ValidationError("beta_ori must be finite and > 0");
  if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("w must be finite and >= 0");
  if (!(k > 0.0) || !std::isfinite(k)) throw ValidationError("k must be finite and > 0");
}

double beta(const ScalingConfig& cfg, double delta) {
  if (!std::isfinite(delta)) throw ParameterError("reward margin must be finite");
  // For δ <= 0 the raw formula is <= β_ori, so the clamp floor applies; this
  // also keeps e^{−kδ} from overflowing for very negative margins.
  if (delta <= 0.0 || cfg.w == 0.0) return cfg.beta_ori;
  const double raw = cfg.beta_ori * (1.0 + cfg.w * -std::expm1(-cfg.k * delta));
  return std::clamp(raw, cfg.beta_min(), cfg.beta_max());
}

}  // namespace prefopt
