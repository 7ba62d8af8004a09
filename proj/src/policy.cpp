#include "prefopt/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <optional>
#include <string>

#include "prefopt/errors.hpp"

namespace prefopt {

void Gradient::add_scaled(const Gradient& other, double scale) {
  if (other.size() != size()) throw ShapeError("gradient length mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += scale * other.values[i];
}

Gradient& Gradient::operator+=(const Gradient& other) {
  add_scaled(other, 1.0);
  return *this;
}

Gradient& Gradient::operator*=(double scale) {
  for (double& v : values) v *= scale;
  return *this;
}

double Gradient::norm() const {
  double acc = 0.0;
  for (double v : values) acc += v * v;
  return std::sqrt(acc);
}

bool Gradient::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

PolicyParams::PolicyParams(std::size_t vocab_size, std::size_t cond_dim)
    : vocab_(vocab_size), cond_(cond_dim), flat_(param_count_for(vocab_size, cond_dim), 0.0) {
  if (vocab_size < 2) throw ShapeError("policy vocabulary must hold at least two tokens");
}

PolicyParams::PolicyParams(std::size_t vocab_size, std::size_t cond_dim, std::vector<double> flat)
    : vocab_(vocab_size), cond_(cond_dim), flat_(std::move(flat)) {
  if (vocab_size < 2) throw ShapeError("policy vocabulary must hold at least two tokens");
  if (flat_.size() != param_count_for(vocab_size, cond_dim)) {
    throw ShapeError("policy parameter buffer has " + std::to_string(flat_.size()) + " entries, expected " +
                     std::to_string(param_count_for(vocab_size, cond_dim)));
  }
}

void PolicyParams::apply_step(const Gradient& grad, double learning_rate) {
  if (grad.size() != flat_.size()) throw ShapeError("gradient does not match policy parameters");
  for (std::size_t i = 0; i < flat_.size(); ++i) flat_[i] -= learning_rate * grad.values[i];
}

bool PolicyParams::all_finite() const {
  return std::all_of(flat_.begin(), flat_.end(), [](double v) { return std::isfinite(v); });
}

PolicyParams init_policy(std::size_t vocab_size, std::size_t cond_dim, std::uint64_t seed, double scale) {
  PolicyParams params(vocab_size, cond_dim);
  std::mt19937_64 engine(seed);
  std::normal_distribution<double> normal(0.0, scale);
  for (double& v : params.flat()) v = normal(engine);
  return params;
}

namespace {

void check_inputs(const PolicyParams& params, std::span<const double> cond, const TokenSeq& y) {
  if (cond.size() != params.cond_dim()) {
    throw ShapeError("conditioning vector has " + std::to_string(cond.size()) + " entries, model expects " +
                     std::to_string(params.cond_dim()));
  }
  if (y.empty()) throw ParameterError("cannot score an empty token sequence");
  validate_tokens(y, params.vocab_size(), "sequence");
}

// U·cond, shared by every position.
std::vector<double> projected(const PolicyParams& params, std::span<const double> cond) {
  const std::size_t V = params.vocab_size();
  std::vector<double> out(V, 0.0);
  for (std::size_t v = 0; v < V; ++v) {
    double acc = 0.0;
    for (std::size_t k = 0; k < cond.size(); ++k) acc += params.proj(v, k) * cond[k];
    out[v] = acc;
  }
  return out;
}

void fill_logits(const PolicyParams& params, const std::vector<double>& proj, std::optional<TokenId> prev,
                 std::vector<double>& logits) {
  const std::size_t V = params.vocab_size();
  for (std::size_t v = 0; v < V; ++v) {
    const double base = prev ? params.transition(*prev, v) : params.start(v);
    logits[v] = base + proj[v];
  }
}

double logsumexp(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double acc = 0.0;
  for (double v : z) acc += std::exp(v - m);
  return m + std::log(acc);
}

}  // namespace

double logprob(const PolicyParams& params, std::span<const double> cond, const TokenSeq& y) {
  check_inputs(params, cond, y);
  const auto proj = projected(params, cond);
  std::vector<double> logits(params.vocab_size());
  double total = 0.0;
  std::optional<TokenId> prev;
  for (TokenId tok : y) {
    fill_logits(params, proj, prev, logits);
    total += logits[tok] - logsumexp(logits);
    prev = tok;
  }
  return total;
}

LogProbGrad logprob_grad(const PolicyParams& params, std::span<const double> cond, const TokenSeq& y) {
  check_inputs(params, cond, y);
  const std::size_t V = params.vocab_size();
  const auto proj = projected(params, cond);
  LogProbGrad out;
  out.grad = Gradient(params.param_count());
  std::vector<double> logits(V);
  std::vector<double> residual_sum(V, 0.0);  // Σ_t (onehot − softmax)
  std::optional<TokenId> prev;
  for (TokenId tok : y) {
    fill_logits(params, proj, prev, logits);
    const double lse = logsumexp(logits);
    out.value += logits[tok] - lse;
    const std::size_t row = prev ? params.transition_offset() + *prev * V : params.start_offset();
    for (std::size_t v = 0; v < V; ++v) {
      const double residual = (v == tok ? 1.0 : 0.0) - std::exp(logits[v] - lse);
      out.grad.values[row + v] += residual;
      residual_sum[v] += residual;
    }
    prev = tok;
  }
  const std::size_t c = params.cond_dim();
  for (std::size_t v = 0; v < V; ++v) {
    for (std::size_t k = 0; k < c; ++k) {
      out.grad.values[params.proj_offset() + v * c + k] = residual_sum[v] * cond[k];
    }
  }
  return out;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::size_t Rng::below(std::size_t n) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

namespace {

template <typename Pick>
TokenSeq decode(const PolicyParams& params, std::span<const double> cond, std::size_t max_len, Pick&& pick) {
  if (cond.size() != params.cond_dim()) throw ShapeError("conditioning vector does not match model");
  if (max_len < 1) throw ParameterError("max_len must be >= 1");
  const auto proj = projected(params, cond);
  const TokenId eos = eos_token(params.vocab_size());
  std::vector<double> logits(params.vocab_size());
  TokenSeq out;
  std::optional<TokenId> prev;
  while (out.size() < max_len) {
    fill_logits(params, proj, prev, logits);
    const TokenId tok = pick(logits);
    out.push_back(tok);
    if (tok == eos) break;
    prev = tok;
  }
  return out;
}

}  // namespace

TokenSeq sample(const PolicyParams& params, std::span<const double> cond, std::size_t max_len,
                double temperature, Rng& rng) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParameterError("temperature must be a finite value > 0");
  }
  return decode(params, cond, max_len, [&](std::vector<double>& logits) {
    for (double& z : logits) z /= temperature;
    const double lse = logsumexp(logits);
    const double u = rng.uniform();
    double cumulative = 0.0;
    for (std::size_t v = 0; v < logits.size(); ++v) {
      cumulative += std::exp(logits[v] - lse);
      if (u < cumulative) return static_cast<TokenId>(v);
    }
    return static_cast<TokenId>(logits.size() - 1);
  });
}

TokenSeq sample(const PolicyParams& params, std::span<const double> cond, std::size_t max_len,
                double temperature, std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  return sample(params, cond, max_len, temperature, rng);
}

TokenSeq greedy_decode(const PolicyParams& params, std::span<const double> cond, std::size_t max_len) {
  return decode(params, cond, max_len, [](const std::vector<double>& logits) {
    return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  });
}

FrozenPolicy freeze_reference(const PolicyParams& params) { return FrozenPolicy(params); }

FrozenPolicy freeze_reference(const FrozenPolicy& frozen) { return frozen; }

std::uint64_t fingerprint(const PolicyParams& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  const std::uint64_t dims[2] = {params.vocab_size(), params.cond_dim()};
  mix(dims, sizeof(dims));
  mix(params.flat().data(), params.flat().size() * sizeof(double));
  return h;
}

}  // namespace prefopt
