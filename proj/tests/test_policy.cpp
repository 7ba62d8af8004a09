#include <doctest.h>

#include <cmath>
#include <numeric>

#include "prefopt/errors.hpp"
#include "prefopt/policy.hpp"
#include "oracle.hpp"

using namespace prefopt;
using namespace prefopt::testing;

TEST_CASE("logprob: uniform parameters give -L ln V") {
  const PolicyParams p(5, 3);
  const std::vector<double> cond{0.3, -1.0, 2.0};
  CHECK(logprob(p, cond, {0, 4, 2, 2}) == doctest::Approx(-4.0 * std::log(5.0)).epsilon(1e-14));
}

TEST_CASE("logprob: hand softmax") {
  PolicyParams p(2, 0);
  p.start(0) = std::log(3.0);
  CHECK(logprob(p, {}, {0}) == doctest::Approx(std::log(0.75)).epsilon(1e-14));
}

TEST_CASE("logprob: shape and input errors") {
  const PolicyParams p(3, 2);
  CHECK_THROWS_AS(logprob(p, std::vector<double>{1.0}, {0}), ShapeError);
  CHECK_THROWS_AS(logprob(p, std::vector<double>{1.0, 2.0}, {}), ParameterError);
  CHECK_THROWS_AS(logprob(p, std::vector<double>{1.0, 2.0}, {3}), ValidationError);
  CHECK_THROWS_AS(PolicyParams(3, 2, std::vector<double>(4)), ShapeError);
}

TEST_CASE("logprob: brute-force normalisation") {
  Engine rng(11);
  for (std::size_t V = 2; V <= 4; ++V) {
    for (std::size_t L = 1; L <= 4; ++L) {
      const auto p = random_policy(V, 2, rng);
      const auto q = random_query(2, rng);
      double total = 0.0;
      for (const auto& y : all_sequences(V, L)) total += std::exp(logprob(p, q.features, y));
      CHECK(std::abs(total - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("logprob_grad: uniform V=2 start gradient") {
  const PolicyParams p(2, 1);
  const auto g = logprob_grad(p, std::vector<double>{0.0}, {0});
  CHECK(g.value == doctest::Approx(std::log(0.5)));
  CHECK(g.grad[0] == doctest::Approx(0.5));
  CHECK(g.grad[1] == doctest::Approx(-0.5));
}

TEST_CASE("logprob_grad: U block is outer-product structured (2x2)") {
  // Symbolic: y = [1], uniform logits, cond = (2, -3).
  // residual = onehot(1) - (1/2, 1/2) = (-1/2, 1/2); dU = residual ⊗ cond.
  const PolicyParams p(2, 2);
  const std::vector<double> cond{2.0, -3.0};
  const auto g = logprob_grad(p, cond, {1});
  const std::size_t off = p.proj_offset();
  CHECK(g.grad[off + 0] == doctest::Approx(-1.0));
  CHECK(g.grad[off + 1] == doctest::Approx(1.5));
  CHECK(g.grad[off + 2] == doctest::Approx(1.0));
  CHECK(g.grad[off + 3] == doctest::Approx(-1.5));
}

TEST_CASE("logprob_grad matches central differences on random instances") {
  Engine rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t V = uniform_index(2, 6, rng);
    const std::size_t c = uniform_index(1, 4, rng);
    const auto p = random_policy(V, c, rng);
    const auto q = random_query(c, rng);
    const auto y = random_seq(V, uniform_index(1, 6, rng), rng);
    const auto analytic = logprob_grad(p, q.features, y);
    CHECK(analytic.value == doctest::Approx(logprob(p, q.features, y)).epsilon(1e-13));
    CHECK(std::abs(static_cast<double>(ld_logprob(widen(p.flat()), V, c, q.features, y)) - analytic.value) < 1e-12);
    const auto check = ld_check(p.flat(), analytic.grad.values,
                                [&](const LDVec& v) { return ld_logprob(v, V, c, q.features, y); });
    CHECK_MESSAGE(check.ok, "max rel err " << check.max_rel_err);
  }
}

TEST_CASE("sample: forced EOS and determinism") {
  PolicyParams p(4, 1);
  p.start(3) = 40.0;
  CHECK(sample(p, std::vector<double>{0.0}, 10, 1.0, 1) == TokenSeq{3});

  Engine rng(5);
  const auto r = random_policy(6, 2, rng);
  const std::vector<double> cond{0.1, 0.2};
  CHECK(sample(r, cond, 20, 0.8, 99) == sample(r, cond, 20, 0.8, 99));
  CHECK(sample(r, cond, 20, 1.0, 99).size() <= 20);
  CHECK_THROWS_AS(sample(r, cond, 20, 0.0, 1), ParameterError);
  CHECK_THROWS_AS(sample(r, cond, 20, -1.0, 1), ParameterError);
  CHECK_THROWS_AS(sample(r, cond, 0, 1.0, 1), ParameterError);
}

TEST_CASE("sample: uniform first-token frequencies within 3 sigma") {
  const std::size_t V = 5;
  const PolicyParams p(V, 1);
  const std::size_t n = 10000;
  std::vector<std::size_t> counts(V, 0);
  Rng rng(1234);
  for (std::size_t i = 0; i < n; ++i) counts[sample(p, std::vector<double>{0.0}, 1, 1.0, rng)[0]]++;
  const double prob = 1.0 / V;
  const double sigma = std::sqrt(n * prob * (1 - prob));
  for (std::size_t v = 0; v < V; ++v) CHECK(std::abs(counts[v] - n * prob) < 3 * sigma);
}

TEST_CASE("greedy decode follows argmax and stops at EOS") {
  PolicyParams p(4, 0);
  p.start(2) = 1.0;
  p.transition(2, 1) = 1.0;
  p.transition(1, 3) = 1.0;
  CHECK(greedy_decode(p, {}, 10) == TokenSeq{2, 1, 3});
  CHECK(greedy_decode(p, {}, 2) == TokenSeq{2, 1});
}

TEST_CASE("freeze_reference copies, is immutable, and is idempotent") {
  Engine rng(8);
  PolicyParams trainable = random_policy(4, 2, rng);
  const FrozenPolicy ref = freeze_reference(trainable);
  const auto before = fingerprint(ref.params());
  const auto q = random_query(2, rng);
  const double lp = logprob(ref, q.features, {1, 2});
  Gradient g(trainable.param_count());
  for (auto& v : g.values) v = 1.0;
  trainable.apply_step(g, 0.5);
  CHECK(fingerprint(ref.params()) == before);
  CHECK(logprob(ref, q.features, {1, 2}) == lp);
  const FrozenPolicy again = freeze_reference(ref);
  CHECK(again.params() == ref.params());
  CHECK(&again.params() == &ref.params());
}

TEST_CASE("init_policy is seeded") {
  CHECK(init_policy(4, 3, 9) == init_policy(4, 3, 9));
  CHECK_FALSE(init_policy(4, 3, 9) == init_policy(4, 3, 10));
}
