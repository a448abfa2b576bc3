/*
 * Copyright 2026 The GAMMLI Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef GAMMLI_KMEANS_HPP_
#define GAMMLI_KMEANS_HPP_

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gammli/error.hpp"
#include "gammli/random.hpp"

namespace gammli {

// Partition of entities into k groups in feature space.
struct Clustering {
  int k = 0;
  std::vector<int> assignments;  // entity -> cluster in [0, k)
  Eigen::MatrixXd centroids;     // k x d, feature space
  double inertia = 0.0;
  std::vector<double> inertia_history;  // per Lloyd iteration of the kept restart

  int size() const { return static_cast<int>(assignments.size()); }

  std::vector<int> counts() const {
    std::vector<int> c(static_cast<std::size_t>(k), 0);
    for (int a : assignments) ++c[static_cast<std::size_t>(a)];
    return c;
  }

  // Every entity in its own cluster.
  static Clustering singletons(const Eigen::MatrixXd& points) {
    Clustering c;
    c.k = static_cast<int>(points.rows());
    c.assignments.resize(static_cast<std::size_t>(c.k));
    std::iota(c.assignments.begin(), c.assignments.end(), 0);
    c.centroids = points;
    return c;
  }
};

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
};

// Index of the nearest centroid (squared Euclidean); ties go to the lowest index.
inline int assign_cluster(const Eigen::Ref<const Eigen::RowVectorXd>& point, const Clustering& clustering) {
  if (point.size() != clustering.centroids.cols()) {
    throw ValidationError("point has " + std::to_string(point.size()) + " coordinates, centroids have " +
                          std::to_string(clustering.centroids.cols()));
  }
  if (clustering.centroids.rows() == 0) throw ValidationError("clustering has no centroids");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < clustering.centroids.rows(); ++c) {
    const double d = (clustering.centroids.row(c) - point).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

inline int count_distinct_rows(const Eigen::MatrixXd& points) {
  std::vector<int> order(static_cast<std::size_t>(points.rows()));
  std::iota(order.begin(), order.end(), 0);
  auto less = [&](int a, int b) {
    for (Eigen::Index c = 0; c < points.cols(); ++c) {
      if (points(a, c) != points(b, c)) return points(a, c) < points(b, c);
    }
    return false;
  };
  std::sort(order.begin(), order.end(), less);
  int distinct = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (r == 0 || less(order[r - 1], order[r])) ++distinct;
  }
  return distinct;
}

namespace detail {

inline Clustering lloyd(const Eigen::MatrixXd& points, int k, Rng& rng, int max_iterations) {
  const auto n = points.rows();
  Clustering out;
  out.k = k;
  out.centroids.resize(k, points.cols());

  // k-means++ seeding.
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  out.centroids.row(0) = points.row(pick(rng));
  Eigen::VectorXd d2(n);
  for (Eigen::Index i = 0; i < n; ++i) d2(i) = (points.row(i) - out.centroids.row(0)).squaredNorm();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc > target && d2(i) > 0.0) {
          chosen = i;
          break;
        }
      }
      while (d2(chosen) == 0.0 && chosen > 0) --chosen;
    }
    out.centroids.row(c) = points.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), (points.row(i) - out.centroids.row(c)).squaredNorm());
  }

  out.assignments.assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n));
  for (int iter = 0; iter < max_iterations; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (points.row(i) - out.centroids.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (out.assignments[static_cast<std::size_t>(i)] != best) changed = true;
      out.assignments[static_cast<std::size_t>(i)] = best;
      dist[static_cast<std::size_t>(i)] = best_d;
    }
    // Reseed empty clusters at the point farthest from its centroid.
    std::vector<int> counts = out.counts();
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      std::size_t far = 0;
      for (std::size_t i = 1; i < dist.size(); ++i) {
        if (dist[i] > dist[far] && counts[static_cast<std::size_t>(out.assignments[i])] > 1) far = i;
      }
      --counts[static_cast<std::size_t>(out.assignments[far])];
      out.assignments[far] = c;
      counts[static_cast<std::size_t>(c)] = 1;
      dist[far] = 0.0;
      changed = true;
    }
    double inertia = 0.0;
    out.centroids.setZero();
    for (Eigen::Index i = 0; i < n; ++i) out.centroids.row(out.assignments[static_cast<std::size_t>(i)]) += points.row(i);
    for (int c = 0; c < k; ++c) out.centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    for (Eigen::Index i = 0; i < n; ++i) {
      inertia += (points.row(i) - out.centroids.row(out.assignments[static_cast<std::size_t>(i)])).squaredNorm();
    }
    out.inertia = inertia;
    out.inertia_history.push_back(inertia);
    if (!changed) break;
  }
  return out;
}

}  // namespace detail

// Lloyd's algorithm from k-means++ seeds; the restart with the lowest inertia
// is kept (earliest restart on ties). points: one row per entity.
inline Clustering kmeans(const Eigen::MatrixXd& points, int k, std::uint64_t seed, KMeansOptions options = {}) {
  if (k < 1) throw ValidationError("k must be at least 1");
  if (points.rows() == 0) throw ValidationError("cannot cluster an empty point set");
  const int distinct = count_distinct_rows(points);
  if (k > distinct) {
    throw ValidationError("k = " + std::to_string(k) + " exceeds the " + std::to_string(distinct) +
                          " distinct points");
  }
  Clustering best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    Clustering c = detail::lloyd(points, k, rng, options.max_iterations);
    if (c.inertia < best.inertia) best = std::move(c);
  }
  return best;
}

}  // namespace gammli

#endif  // GAMMLI_KMEANS_HPP_
