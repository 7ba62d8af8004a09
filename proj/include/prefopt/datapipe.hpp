#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <vector>

#include "prefopt/core.hpp"

namespace prefopt {

using Point = std::vector<double>;

inline constexpr std::size_t kDefaultClusterCount = 100;

struct ClusterModel {
  std::vector<Point> centers;
  std::vector<std::size_t> assignments;  // point index -> center index
  double inertia = 0.0;                  // Σ squared distance to assigned center
  std::vector<double> inertia_history;   // after every assignment step
  std::size_t iterations = 0;
  bool converged = false;
};

double squared_distance(const Point& a, const Point& b);

/// Index of the nearest center; ties go to the lowest index.
std::size_t nearest_center(const Point& p, const std::vector<Point>& centers);

/// Lloyd's algorithm with k-means++ seeding. Stops when assignments repeat or
/// after max_iters update steps. A center left without points is moved onto
/// the point farthest from its current center.
ClusterModel kmeans(const std::vector<Point>& points, std::size_t k, std::size_t max_iters, std::uint64_t seed);

/// Scales every non-zero row to unit L2 norm.
std::vector<Point> normalize_rows(std::vector<Point> points);

/// min(n, |cluster|) indices drawn uniformly without replacement from each
/// cluster; result sorted ascending.
std::vector<std::size_t> cluster_sample(const ClusterModel& model, std::size_t per_cluster_n, std::uint64_t seed);

/// Category weights for ratio-constrained sampling (e.g. Long 4, Short 5, MCQ 1).
struct RatioSpec {
  std::map<Category, double> weights;

  double weight(Category c) const;
  void validate() const;
};

RatioSpec default_ratio();  // 4:5:1 over Long:Short:MCQ

/// Largest-remainder apportionment of `total` by weight, ties to the lower
/// index. `supply` caps each slot; capped slots are fixed and the remainder is
/// re-apportioned among the rest. Throws ParameterError when the weighted
/// supply cannot cover total.
std::vector<std::size_t> apportion(const std::vector<double>& weights, const std::vector<std::size_t>& supply,
                                   std::size_t total);

/// Per-category targets by apportion(), then uniform sampling within each
/// category. Result sorted ascending.
std::vector<std::size_t> stratified_resample(const std::vector<Category>& categories, const RatioSpec& spec,
                                             std::size_t total, std::uint64_t seed);

}  // namespace prefopt
