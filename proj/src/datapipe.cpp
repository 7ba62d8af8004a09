#include "prefopt/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "prefopt/errors.hpp"
#include "prefopt/policy.hpp"

namespace prefopt {

double squared_distance(const Point& a, const Point& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

std::size_t nearest_center(const Point& p, const std::vector<Point>& centers) {
  std::size_t best = 0;
  double best_d = squared_distance(p, centers[0]);
  for (std::size_t c = 1; c < centers.size(); ++c) {
    const double d = squared_distance(p, centers[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

namespace {

std::vector<Point> seed_plus_plus(const std::vector<Point>& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.size();
  std::vector<Point> centers;
  std::vector<bool> taken(n, false);
  std::size_t first = rng.below(n);
  centers.push_back(points[first]);
  taken[first] = true;
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points[i], centers[0]);
  while (centers.size() < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cumulative = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cumulative += d2[i];
        if (d2[i] > 0.0 && target < cumulative) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        // Rounding left target past the last positive weight.
        for (std::size_t i = n; i-- > 0;) {
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // Every point coincides with a center; take the first unused one.
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i]) {
          pick = i;
          break;
        }
      }
    }
    taken[pick] = true;
    centers.push_back(points[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points[i], centers.back()));
  }
  return centers;
}

double assign(const std::vector<Point>& points, const std::vector<Point>& centers,
              std::vector<std::size_t>& assignments) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    assignments[i] = nearest_center(points[i], centers);
    inertia += squared_distance(points[i], centers[assignments[i]]);
  }
  return inertia;
}

void update_centers(const std::vector<Point>& points, const std::vector<std::size_t>& assignments,
                    std::vector<Point>& centers) {
  const std::size_t k = centers.size();
  const std::size_t dim = points.front().size();
  std::vector<Point> sums(k, Point(dim, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    auto& s = sums[assignments[i]];
    for (std::size_t j = 0; j < dim; ++j) s[j] += points[i][j];
    ++counts[assignments[i]];
  }
  std::vector<bool> used(points.size(), false);
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] > 0) {
      for (std::size_t j = 0; j < dim; ++j) centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
      continue;
    }
    // Empty cluster: move it onto the point farthest from its assigned center.
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (used[i]) continue;
      const double d = squared_distance(points[i], centers[assignments[i]]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    used[far] = true;
    centers[c] = points[far];
  }
}

}  // namespace

ClusterModel kmeans(const std::vector<Point>& points, std::size_t k, std::size_t max_iters, std::uint64_t seed) {
  if (k < 1) throw ParameterError("k must be >= 1");
  if (points.size() < k) {
    throw ParameterError("k-means needs at least k points (" + std::to_string(points.size()) + " < " +
                         std::to_string(k) + ")");
  }
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw ShapeError("points have inconsistent dimensions");
    for (double v : p) {
      if (!std::isfinite(v)) throw ValidationError("point coordinates must be finite");
    }
  }

  Rng rng(seed);
  ClusterModel model;
  model.centers = seed_plus_plus(points, k, rng);
  model.assignments.assign(points.size(), 0);
  model.inertia = assign(points, model.centers, model.assignments);
  model.inertia_history.push_back(model.inertia);
  for (std::size_t it = 0; it < max_iters; ++it) {
    update_centers(points, model.assignments, model.centers);
    const auto previous = model.assignments;
    model.inertia = assign(points, model.centers, model.assignments);
    model.inertia_history.push_back(model.inertia);
    model.iterations = it + 1;
    if (model.assignments == previous) {
      model.converged = true;
      break;
    }
  }
  return model;
}

std::vector<Point> normalize_rows(std::vector<Point> points) {
  for (auto& p : points) {
    double n2 = 0.0;
    for (double v : p) n2 += v * v;
    if (n2 == 0.0) continue;
    const double inv = 1.0 / std::sqrt(n2);
    for (double& v : p) v *= inv;
  }
  return points;
}

namespace {

// First `take` entries of a seeded partial Fisher-Yates shuffle.
std::vector<std::size_t> draw_without_replacement(std::vector<std::size_t> pool, std::size_t take, Rng& rng) {
  take = std::min(take, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  return pool;
}

}  // namespace

std::vector<std::size_t> cluster_sample(const ClusterModel& model, std::size_t per_cluster_n, std::uint64_t seed) {
  if (per_cluster_n < 1) throw ParameterError("per-cluster sample size must be >= 1");
  std::vector<std::vector<std::size_t>> members(model.centers.size());
  for (std::size_t i = 0; i < model.assignments.size(); ++i) members[model.assignments[i]].push_back(i);
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (auto& m : members) {
    auto drawn = draw_without_replacement(std::move(m), per_cluster_n, rng);
    out.insert(out.end(), drawn.begin(), drawn.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

double RatioSpec::weight(Category c) const {
  auto it = weights.find(c);
  return it == weights.end() ? 0.0 : it->second;
}

void RatioSpec::validate() const {
  bool any = false;
  for (const auto& [cat, w] : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ValidationError("ratio weight for " + std::string(to_string(cat)) + " must be finite and >= 0");
    }
    any = any || w > 0.0;
  }
  if (!any) throw ValidationError("ratio weights are all zero");
}

RatioSpec default_ratio() { return RatioSpec{{{Category::Long, 4.0}, {Category::Short, 5.0}, {Category::MCQ, 1.0}}}; }

std::vector<std::size_t> apportion(const std::vector<double>& weights, const std::vector<std::size_t>& supply,
                                   std::size_t total) {
  const std::size_t m = weights.size();
  if (supply.size() != m) throw ShapeError("weights and supply differ in length");
  std::vector<std::size_t> counts(m, 0);
  std::vector<bool> active(m);
  for (std::size_t i = 0; i < m; ++i) active[i] = weights[i] > 0.0;
  std::size_t remaining = total;
  while (remaining > 0) {
    double wsum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (active[i]) wsum += weights[i];
    }
    if (wsum <= 0.0) throw ParameterError("weighted supply cannot cover the requested total");

    // Quotas are remaining·w_i / wsum. Remainders are kept as numerators over
    // the shared denominator wsum so that equal remainders compare equal for
    // integer weights, letting the lower index win ties.
    std::vector<std::size_t> target(m, 0);
    std::vector<double> remainder(m, -1.0);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < m; ++i) {
      if (!active[i]) continue;
      const double num = static_cast<double>(remaining) * weights[i];
      double whole = std::floor(num / wsum);
      while (whole > 0.0 && whole * wsum > num) whole -= 1.0;
      while ((whole + 1.0) * wsum <= num) whole += 1.0;
      target[i] = static_cast<std::size_t>(whole);
      remainder[i] = num - whole * wsum;
      assigned += target[i];
    }
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&remainder](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t r = 0; assigned < remaining; ++r) {
      ++target[order[r]];
      ++assigned;
    }

    bool capped = false;
    for (std::size_t i = 0; i < m; ++i) {
      if (active[i] && target[i] > supply[i]) {
        counts[i] = supply[i];
        remaining -= supply[i];
        active[i] = false;
        capped = true;
      }
    }
    if (!capped) {
      for (std::size_t i = 0; i < m; ++i) {
        if (active[i]) counts[i] = target[i];
      }
      remaining = 0;
    }
  }
  return counts;
}

std::vector<std::size_t> stratified_resample(const std::vector<Category>& categories, const RatioSpec& spec,
                                             std::size_t total, std::uint64_t seed) {
  if (total < 1) throw ParameterError("total must be >= 1");
  if (total > categories.size()) {
    throw ParameterError("total " + std::to_string(total) + " exceeds dataset size " +
                         std::to_string(categories.size()));
  }
  spec.validate();
  std::vector<std::vector<std::size_t>> pools(kAllCategories.size());
  for (std::size_t i = 0; i < categories.size(); ++i) pools[static_cast<std::size_t>(categories[i])].push_back(i);
  std::vector<double> weights;
  std::vector<std::size_t> supply;
  for (Category c : kAllCategories) {
    weights.push_back(spec.weight(c));
    supply.push_back(pools[static_cast<std::size_t>(c)].size());
  }
  const auto counts = apportion(weights, supply, total);
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < pools.size(); ++c) {
    auto drawn = draw_without_replacement(std::move(pools[c]), counts[c], rng);
    out.insert(out.end(), drawn.begin(), drawn.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace prefopt
