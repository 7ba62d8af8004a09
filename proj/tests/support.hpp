// Test-only oracles and generators. Nothing here calls into the analytic
// gradient code, so finite-difference checks stay independent of it.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "prefopt/core.hpp"
#include "prefopt/pairgen.hpp"
#include "prefopt/policy.hpp"

namespace prefopt::testing {

using Engine = std::mt19937_64;

/// Central differences of f at x with step h.
inline std::vector<double> central_differences(const std::vector<double>& x,
                                               const std::function<double(const std::vector<double>&)>& f,
                                               double h = 1e-5) {
  std::vector<double> out(x.size());
  std::vector<double> probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

struct GradCheck {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  bool ok = true;
};

/// Elementwise relative error on entries with |analytic| > floor.
inline GradCheck compare_gradients(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                   double tol = 1e-4, double floor = 1e-8) {
  GradCheck out;
  if (analytic.size() != numeric.size()) {
    out.ok = false;
    return out;
  }
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (std::abs(analytic[i]) <= floor) continue;
    const double denom = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    const double rel = std::abs(analytic[i] - numeric[i]) / denom;
    out.max_rel_err = std::max(out.max_rel_err, rel);
    ++out.checked;
  }
  out.ok = out.max_rel_err <= tol;
  return out;
}

inline PolicyParams random_policy(std::size_t vocab, std::size_t cond, Engine& rng, double scale = 1.0) {
  PolicyParams p(vocab, cond);
  std::normal_distribution<double> normal(0.0, scale);
  for (double& v : p.flat()) v = normal(rng);
  return p;
}

inline TokenSeq random_seq(std::size_t vocab, std::size_t len, Engine& rng) {
  std::uniform_int_distribution<TokenId> tok(0, static_cast<TokenId>(vocab - 1));
  TokenSeq out(len);
  for (auto& t : out) t = tok(rng);
  return out;
}

inline QueryFeatures random_query(std::size_t dim, Engine& rng, const std::string& id = "q") {
  QueryFeatures q;
  q.id = id;
  std::normal_distribution<double> normal(0.0, 1.0);
  q.features.resize(dim);
  for (double& f : q.features) f = normal(rng);
  return q;
}

inline std::size_t uniform_index(std::size_t lo, std::size_t hi, Engine& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double uniform_real(double lo, double hi, Engine& rng) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Random pairs with random margins and (optionally) random vision queries.
inline std::vector<ComparisonPair> random_pairs(std::size_t n, std::size_t vocab, std::size_t dim, Engine& rng,
                                                bool with_vision = false) {
  std::vector<ComparisonPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    ComparisonPair p;
    p.query = random_query(dim, rng, "q" + std::to_string(i));
    p.chosen = random_seq(vocab, uniform_index(1, 5, rng), rng);
    p.rejected = random_seq(vocab, uniform_index(1, 5, rng), rng);
    p.delta = uniform_real(-2.0, 6.0, rng);
    if (with_vision) p.vision_query = random_query(dim, rng, p.query.id + "#mix");
    out.push_back(std::move(p));
  }
  return out;
}

/// Brute-force enumeration of all vocab^len sequences.
inline std::vector<TokenSeq> all_sequences(std::size_t vocab, std::size_t len) {
  std::vector<TokenSeq> out;
  TokenSeq cur(len, 0);
  while (true) {
    out.push_back(cur);
    std::size_t i = 0;
    while (i < len && ++cur[i] == vocab) cur[i++] = 0;
    if (i == len) break;
  }
  return out;
}

inline AnnotatedResponse response(TokenSeq tokens, std::uint32_t rank, TokenSeq critique = {1}) {
  AnnotatedResponse r;
  r.model_name = "m";
  r.tokens = std::move(tokens);
  r.rank = rank;
  r.critique = std::move(critique);
  return r;
}

inline RankedResponseSet ranked_set(const std::vector<std::uint32_t>& ranks, const std::string& id = "q",
                                    std::size_t dim = 2) {
  RankedResponseSet set;
  set.query.id = id;
  set.query.features.assign(dim, 0.5);
  for (std::size_t i = 0; i < ranks.size(); ++i) {
    set.responses.push_back(response({static_cast<TokenId>(i % 4), 1}, ranks[i]));
  }
  return set;
}


/// Exhaustive largest-remainder oracle for integer weights: among every
/// allocation of `total` seats, the one minimising Σ(a_i·W − total·w_i)²,
/// with ties going to the lexicographically greatest allocation (lower
/// indices first).
inline std::vector<std::size_t> exhaustive_apportion(const std::vector<std::int64_t>& weights, std::int64_t total) {
  std::int64_t W = 0;
  for (auto w : weights) W += w;
  const std::size_t m = weights.size();
  std::vector<std::size_t> best, cur(m, 0);
  __int128 best_cost = -1;
  std::function<void(std::size_t, std::int64_t)> rec = [&](std::size_t i, std::int64_t left) {
    if (i + 1 == m) {
      cur[i] = static_cast<std::size_t>(left);
      __int128 cost = 0;
      for (std::size_t j = 0; j < m; ++j) {
        const __int128 e = static_cast<__int128>(cur[j]) * W - static_cast<__int128>(total) * weights[j];
        cost += e * e;
      }
      if (best_cost < 0 || cost < best_cost || (cost == best_cost && cur > best)) {
        best_cost = cost;
        best = cur;
      }
      return;
    }
    for (std::int64_t a = 0; a <= left; ++a) {
      cur[i] = static_cast<std::size_t>(a);
      rec(i + 1, left - a);
    }
  };
  rec(0, total);
  return best;
}


/// Three scored samples with known outcomes plus one all-tied sample:
///   long:  3 pairs, 2 correct
///   short: 1 pair, correct
///   mcq:   2 pairs, 1 correct (the other is a score tie)
/// Overall ACC = 4/6, ACC+ = 1/3; the tied sample is excluded with a warning.
struct BenchFixture {
  Dataset bench;
  RewardTable scores;
};

inline BenchFixture bench_fixture() {
  BenchFixture f;
  f.bench.vocab_size = 5;
  f.bench.feature_dim = 2;
  auto add = [&f](const std::string& id, Category cat, const std::vector<std::uint32_t>& ranks,
                  const std::vector<double>& scores) {
    auto set = ranked_set(ranks, id);
    set.query.category = cat;
    f.bench.items.push_back(set);
    for (std::size_t i = 0; i < scores.size(); ++i) f.scores[{id, static_cast<std::uint32_t>(i)}] = scores[i];
  };
  add("long", Category::Long, {1, 2, 3}, {3.0, 1.0, 2.0});
  add("short", Category::Short, {1, 2}, {5.0, 4.0});
  add("mcq", Category::MCQ, {2, 1, 1}, {1.0, 1.0, 2.0});
  add("tied", Category::Safety, {1, 1}, {0.0, 0.0});
  return f;
}


/// Planted preference data: every item has a chosen response containing
/// token 0 (never 1) and a rejected one containing token 1 (never 0), with
/// filler from {2, 3}. V = 5, so token 4 is EOS and never appears.
inline Dataset planted_policy_dataset(std::size_t n_items, std::size_t dim, Engine& rng) {
  Dataset ds;
  ds.vocab_size = 5;
  ds.feature_dim = dim;
  auto make = [&](TokenId marker) {
    TokenSeq y(uniform_index(2, 5, rng));
    for (auto& t : y) t = static_cast<TokenId>(uniform_index(2, 3, rng));
    y[uniform_index(0, y.size() - 1, rng)] = marker;
    return y;
  };
  for (std::size_t i = 0; i < n_items; ++i) {
    RankedResponseSet set;
    set.query = random_query(dim, rng, "p" + std::to_string(i));
    set.responses.push_back(response(make(0), 1));
    set.responses.push_back(response(make(1), 2));
    ds.items.push_back(std::move(set));
  }
  return ds;
}

/// Reward table that scores the chosen response of every item `margin` above
/// the rejected one, with the margin drawn per item from [lo, hi].
inline RewardTable planted_margins(const Dataset& ds, double lo, double hi, Engine& rng) {
  RewardTable table;
  for (const auto& item : ds.items) {
    const double m = uniform_real(lo, hi, rng);
    for (std::size_t r = 0; r < item.responses.size(); ++r) {
      table[{item.query.id, static_cast<std::uint32_t>(r)}] = -m * static_cast<double>(item.responses[r].rank);
    }
  }
  return table;
}

}  // namespace prefopt::testing
