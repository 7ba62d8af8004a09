#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "prefopt/core.hpp"

namespace prefopt {

/// Flat partial derivatives aligned with a parameter block's canonical order.
struct Gradient {
  std::vector<double> values;

  Gradient() = default;
  explicit Gradient(std::size_t n) : values(n, 0.0) {}

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  /// this += scale * other
  void add_scaled(const Gradient& other, double scale);
  Gradient& operator+=(const Gradient& other);
  Gradient& operator*=(double scale);
  double norm() const;
  bool all_finite() const;

  bool operator==(const Gradient&) const = default;
};

/// Query-conditioned bigram model over a vocabulary of size V with
/// conditioning dimension c:
///
///   z_0 = s + U·cond,  z_t = T[y_{t-1}] + U·cond,  p(y_t) = softmax(z_t)[y_t].
///
/// Parameters live in one flat buffer ordered s, T row-major, U row-major;
/// Gradient uses the same order.
class PolicyParams {
 public:
  PolicyParams() = default;
  /// All-zero (uniform) parameters.
  PolicyParams(std::size_t vocab_size, std::size_t cond_dim);
  /// Takes ownership of an existing flat buffer; throws ShapeError on size mismatch.
  PolicyParams(std::size_t vocab_size, std::size_t cond_dim, std::vector<double> flat);

  std::size_t vocab_size() const { return vocab_; }
  std::size_t cond_dim() const { return cond_; }
  std::size_t param_count() const { return flat_.size(); }

  static std::size_t param_count_for(std::size_t vocab_size, std::size_t cond_dim) {
    return vocab_size + vocab_size * vocab_size + vocab_size * cond_dim;
  }

  double& start(std::size_t v) { return flat_[v]; }
  double start(std::size_t v) const { return flat_[v]; }
  double& transition(std::size_t prev, std::size_t next) { return flat_[vocab_ + prev * vocab_ + next]; }
  double transition(std::size_t prev, std::size_t next) const { return flat_[vocab_ + prev * vocab_ + next]; }
  double& proj(std::size_t v, std::size_t k) { return flat_[proj_offset() + v * cond_ + k]; }
  double proj(std::size_t v, std::size_t k) const { return flat_[proj_offset() + v * cond_ + k]; }

  std::span<double> flat() { return flat_; }
  std::span<const double> flat() const { return flat_; }

  std::size_t start_offset() const { return 0; }
  std::size_t transition_offset() const { return vocab_; }
  std::size_t proj_offset() const { return vocab_ + vocab_ * vocab_; }

  /// θ ← θ − lr·g
  void apply_step(const Gradient& grad, double learning_rate);
  bool all_finite() const;

  bool operator==(const PolicyParams&) const = default;

 private:
  std::size_t vocab_ = 0;
  std::size_t cond_ = 0;
  std::vector<double> flat_;
};

/// Entries drawn from N(0, scale²) with a seeded generator.
PolicyParams init_policy(std::size_t vocab_size, std::size_t cond_dim, std::uint64_t seed,
                         double scale = 0.02);

/// log p(y | cond). Throws ShapeError on dimension mismatch, ParameterError on empty y.
double logprob(const PolicyParams& params, std::span<const double> cond, const TokenSeq& y);

struct LogProbGrad {
  double value = 0.0;
  Gradient grad;
};

/// logprob together with its gradient with respect to every parameter.
LogProbGrad logprob_grad(const PolicyParams& params, std::span<const double> cond, const TokenSeq& y);

/// Small deterministic generator used for sampling. Uniforms are built from
/// the top 53 bits of a mt19937_64 draw so sequences agree across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();
  std::uint64_t next() { return engine_(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

 private:
  std::mt19937_64 engine_;
};

/// Ancestral sampling until EOS (id V−1) or max_len tokens.
TokenSeq sample(const PolicyParams& params, std::span<const double> cond, std::size_t max_len,
                double temperature, std::uint64_t rng_seed);
TokenSeq sample(const PolicyParams& params, std::span<const double> cond, std::size_t max_len,
                double temperature, Rng& rng);

/// Argmax decoding (lowest id on ties) until EOS or max_len tokens.
TokenSeq greedy_decode(const PolicyParams& params, std::span<const double> cond, std::size_t max_len);

/// Immutable, shareable snapshot of a policy. Copies share the same frozen
/// parameters; nothing can mutate them after construction.
class FrozenPolicy {
 public:
  explicit FrozenPolicy(PolicyParams params)
      : params_(std::make_shared<const PolicyParams>(std::move(params))) {}

  const PolicyParams& params() const { return *params_; }
  operator const PolicyParams&() const { return *params_; }  // NOLINT

 private:
  std::shared_ptr<const PolicyParams> params_;
};

FrozenPolicy freeze_reference(const PolicyParams& params);
FrozenPolicy freeze_reference(const FrozenPolicy& frozen);

/// FNV-1a over the raw parameter bytes; used to audit reference immutability.
std::uint64_t fingerprint(const PolicyParams& params);

}  // namespace prefopt
