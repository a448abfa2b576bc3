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

#ifndef GAMMLI_LATENT_HPP_
#define GAMMLI_LATENT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gammli/error.hpp"
#include "gammli/kmeans.hpp"
#include "gammli/random.hpp"

namespace gammli {

struct SparseEntry {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

// Partially observed m x n matrix; entries outside `entries` are missing.
struct ResidualMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<SparseEntry> entries;

  void validate() const {
    for (const auto& e : entries) {
      if (e.row < 0 || e.row >= rows || e.col < 0 || e.col >= cols) {
        throw ValidationError("residual entry outside the matrix");
      }
      if (!std::isfinite(e.value)) throw ValidationError("residual matrix has a non-finite entry");
    }
  }
};

// Row i of the result is the mean of the rows of `factors` sharing i's group.
inline Eigen::MatrixXd group_means(const Eigen::MatrixXd& factors, const std::vector<int>& assignments, int groups) {
  if (static_cast<Eigen::Index>(assignments.size()) != factors.rows()) {
    throw ValidationError("clustering does not cover every factor row");
  }
  Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(groups, factors.cols());
  std::vector<int> counts(static_cast<std::size_t>(groups), 0);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    sums.row(assignments[i]) += factors.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(assignments[i])];
  }
  for (int g = 0; g < groups; ++g) {
    if (counts[static_cast<std::size_t>(g)] > 0) sums.row(g) /= static_cast<double>(counts[static_cast<std::size_t>(g)]);
  }
  return sums;
}

// Cluster centroid matrix: each row replaced by its cluster's mean row.
inline Eigen::MatrixXd centroid_matrices(const Eigen::MatrixXd& factors, const Clustering& clustering) {
  const Eigen::MatrixXd means = group_means(factors, clustering.assignments, clustering.k);
  Eigen::MatrixXd out(factors.rows(), factors.cols());
  for (Eigen::Index i = 0; i < factors.rows(); ++i) out.row(i) = means.row(clustering.assignments[static_cast<std::size_t>(i)]);
  return out;
}

// Working matrix M* = S + left * right^T, with S supported on the observed set.
// Held in this form so products never materialize the dense m x n matrix.
struct WorkingMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<SparseEntry> sparse;
  Eigen::MatrixXd left;   // rows x r
  Eigen::MatrixXd right;  // cols x r

  Eigen::MatrixXd dense() const {
    Eigen::MatrixXd d = left * right.transpose();
    for (const auto& e : sparse) d(e.row, e.col) += e.value;
    return d;
  }

  // Q^T M*  (Q: rows x r)  ->  r x cols
  Eigen::MatrixXd left_product(const Eigen::MatrixXd& q) const {
    Eigen::MatrixXd out = (q.transpose() * left) * right.transpose();
    for (const auto& e : sparse) out.col(e.col) += e.value * q.row(e.row).transpose();
    return out;
  }

  // M* Q  (Q: cols x r)  ->  rows x r
  Eigen::MatrixXd right_product(const Eigen::MatrixXd& q) const {
    Eigen::MatrixXd out = left * (right.transpose() * q);
    for (const auto& e : sparse) out.row(e.row) += e.value * q.row(e.col);
    return out;
  }
};

// M* = P_Omega(M - U V^T) + U (V - V_centroid)^T.
inline WorkingMatrix working_matrix(const ResidualMatrix& m, const Eigen::MatrixXd& u_hat, const Eigen::MatrixXd& v_hat,
                                    const Eigen::MatrixXd& v_centroid) {
  if (u_hat.rows() != m.rows || v_hat.rows() != m.cols || v_centroid.rows() != m.cols ||
      u_hat.cols() != v_hat.cols() || v_centroid.cols() != v_hat.cols()) {
    throw ValidationError("working_matrix: inconsistent shapes");
  }
  WorkingMatrix w{m.rows, m.cols, {}, u_hat, v_hat - v_centroid};
  w.sparse.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    w.sparse.push_back({e.row, e.col, e.value - u_hat.row(e.row).dot(v_hat.row(e.col))});
  }
  return w;
}

namespace detail {

inline Eigen::VectorXd ridge_scale(const Eigen::VectorXd& sigma, double lambda) {
  if (lambda < 0.0) throw ValidationError("lambda must be non-negative");
  if ((sigma.array() < 0.0).any()) throw ValidationError("singular values must be non-negative");
  Eigen::VectorXd scale(sigma.size());
  for (Eigen::Index c = 0; c < sigma.size(); ++c) {
    const double denom = sigma(c) * sigma(c) + lambda;
    if (denom == 0.0) throw TrainingError("ridge system is singular: lambda = 0 with a zero singular value");
    scale(c) = sigma(c) / denom;
  }
  return scale;
}

}  // namespace detail

// Closed-form minimizer of ||M* - U* S W^T||^2 + lambda ||W||^2 over W:
// W^T = (S^2 + lambda I)^{-1} S U*^T M*.  Returns W^T (r x n).
inline Eigen::MatrixXd ridge_update(const Eigen::MatrixXd& m_star, const Eigen::MatrixXd& u_star,
                                    const Eigen::VectorXd& sigma, double lambda) {
  if (u_star.rows() != m_star.rows() || u_star.cols() != sigma.size()) {
    throw ValidationError("ridge_update: inconsistent shapes");
  }
  const Eigen::VectorXd scale = detail::ridge_scale(sigma, lambda);
  return scale.asDiagonal() * (u_star.transpose() * m_star);
}

inline Eigen::MatrixXd ridge_update(const WorkingMatrix& m_star, const Eigen::MatrixXd& u_star,
                                    const Eigen::VectorXd& sigma, double lambda) {
  if (u_star.rows() != m_star.rows || u_star.cols() != sigma.size()) {
    throw ValidationError("ridge_update: inconsistent shapes");
  }
  const Eigen::VectorXd scale = detail::ridge_scale(sigma, lambda);
  return scale.asDiagonal() * m_star.left_product(u_star);
}

struct ThinSvd {
  Eigen::MatrixXd q;  // n x r, orthonormal columns
  Eigen::VectorXd s;  // r, non-increasing, >= 0
  Eigen::MatrixXd w;  // r x r, orthogonal
};

// A = Q diag(S) W^T for a tall n x r matrix.
inline ThinSvd thin_svd(const Eigen::MatrixXd& a) {
  if (a.rows() < a.cols()) throw ValidationError("thin_svd expects rows >= cols");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  ThinSvd out{svd.matrixU(), svd.singularValues(), svd.matrixV()};
  // Columns for zero singular values may come back unnormalized on degenerate
  // input; re-orthonormalize so Q^T Q = I always holds.
  Eigen::MatrixXd gram = out.q.transpose() * out.q;
  if (!gram.isIdentity(1e-12)) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(out.q);
    Eigen::MatrixXd thin = qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      if (out.s(c) > 0.0 && out.q.col(c).dot(thin.col(c)) < 0.0) thin.col(c) *= -1.0;
    }
    out.q = thin;
  }
  return out;
}

struct LatentOptions {
  int rank = 3;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  int max_iterations = 100;
  double tolerance = 1e-4;  // relative change of the observed-entry RMSE
};

struct LatentFactors {
  int rank = 0;
  double lambda = 0.0;
  Eigen::MatrixXd u;        // m x r, U = U* diag(sigma)
  Eigen::MatrixXd v;        // n x r, V = V* diag(sigma)
  Eigen::VectorXd sigma;
  Eigen::MatrixXd u_star;
  Eigen::MatrixXd v_star;
  std::vector<int> user_groups;
  std::vector<int> item_groups;
  int user_group_count = 0;
  int item_group_count = 0;
  Eigen::MatrixXd user_centroids;  // K x r, mean U row per user cluster
  Eigen::MatrixXd item_centroids;  // L x r
  std::vector<double> objective;   // after each sweep
  std::vector<double> rmse;        // observed-entry RMSE after each sweep
  int iterations = 0;
  bool converged = false;

  double predict(int user, int item) const { return u.row(user).dot(v.row(item)); }

  // Cluster centroid matrices (one centroid row per entity).
  Eigen::MatrixXd u_tilde() const {
    Eigen::MatrixXd out(u.rows(), u.cols());
    for (Eigen::Index i = 0; i < u.rows(); ++i) out.row(i) = user_centroids.row(user_groups[static_cast<std::size_t>(i)]);
    return out;
  }
  Eigen::MatrixXd v_tilde() const {
    Eigen::MatrixXd out(v.rows(), v.cols());
    for (Eigen::Index j = 0; j < v.rows(); ++j) out.row(j) = item_centroids.row(item_groups[static_cast<std::size_t>(j)]);
    return out;
  }
};

// ||P_Omega(M - U V^T)||_F^2 + lambda (||U - U~||_F^2 + ||V - V~||_F^2).
inline double latent_objective(const ResidualMatrix& m, const Eigen::MatrixXd& u, const Eigen::MatrixXd& v,
                               const Eigen::MatrixXd& u_tilde, const Eigen::MatrixXd& v_tilde, double lambda) {
  double fit = 0.0;
  for (const auto& e : m.entries) {
    const double d = e.value - u.row(e.row).dot(v.row(e.col));
    fit += d * d;
  }
  return fit + lambda * ((u - u_tilde).squaredNorm() + (v - v_tilde).squaredNorm());
}

namespace detail {

inline double observed_rmse(const ResidualMatrix& m, const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) {
  if (m.entries.empty()) return 0.0;
  double sse = 0.0;
  for (const auto& e : m.entries) {
    const double d = e.value - u.row(e.row).dot(v.row(e.col));
    sse += d * d;
  }
  return std::sqrt(sse / static_cast<double>(m.entries.size()));
}

inline Eigen::MatrixXd expand(const Eigen::MatrixXd& means, const std::vector<int>& groups) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(groups.size()), means.cols());
  for (std::size_t i = 0; i < groups.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = means.row(groups[i]);
  return out;
}

}  // namespace detail

// Group-regularized soft-impute ALS:
//   min ||P_Omega(M - U V^T)||^2 + lambda (||U - U~||^2 + ||V - V~||^2)
// where U~, V~ hold the cluster means of U and V rows. Each sweep solves the
// V ridge problem against the working matrix, re-orthogonalizes through a thin
// SVD of V Sigma, then does the same for U. Cluster memberships are fixed.
inline LatentFactors fit_latent(const ResidualMatrix& m, const Clustering& users, const Clustering& items,
                                const LatentOptions& options) {
  m.validate();
  if (options.rank < 1) throw ValidationError("latent rank must be at least 1");
  if (options.lambda < 0.0) throw ValidationError("lambda must be non-negative");
  if (users.size() != m.rows || items.size() != m.cols) {
    throw ValidationError("clusterings do not match the residual matrix shape");
  }
  const int r = options.rank;
  if (m.rows < r || m.cols < r) throw ValidationError("latent rank exceeds the matrix dimensions");

  LatentFactors f;
  f.rank = r;
  f.lambda = options.lambda;
  f.user_groups = users.assignments;
  f.item_groups = items.assignments;
  f.user_group_count = users.k;
  f.item_group_count = items.k;

  // U* = orthonormalized Gaussian, Sigma = I, V* = 0.
  Rng rng = make_rng(options.seed, "latent-init");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd g(m.rows, r);
  for (Eigen::Index i = 0; i < g.rows(); ++i)
    for (Eigen::Index c = 0; c < r; ++c) g(i, c) = gauss(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  f.u_star = qr.householderQ() * Eigen::MatrixXd::Identity(m.rows, r);
  f.sigma = Eigen::VectorXd::Ones(r);
  f.v_star = Eigen::MatrixXd::Zero(m.cols, r);
  f.u = f.u_star * f.sigma.asDiagonal();
  f.v = f.v_star * f.sigma.asDiagonal();

  auto refresh_centroids = [&]() {
    f.user_centroids = group_means(f.u, f.user_groups, f.user_group_count);
    f.item_centroids = group_means(f.v, f.item_groups, f.item_group_count);
  };
  refresh_centroids();

  auto check_finite = [&](int iter) {
    if (!f.u.allFinite() || !f.v.allFinite() || !f.sigma.allFinite()) {
      throw TrainingError("latent ALS produced non-finite factors at iteration " + std::to_string(iter));
    }
  };

  double prev_rmse = detail::observed_rmse(m, f.u, f.v);
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    // V step.
    {
      const Eigen::MatrixXd v_tilde = detail::expand(f.item_centroids, f.item_groups);
      const WorkingMatrix ms = working_matrix(m, f.u, f.v, v_tilde);
      const Eigen::MatrixXd v_dd_t = ridge_update(ms, f.u_star, f.sigma, options.lambda);
      const Eigen::MatrixXd v_new = v_dd_t.transpose() + v_tilde;
      // Rebalance: V Sigma = P S W^T  ->  V* = P, Sigma = sqrt(S), U* <- U* W.
      const ThinSvd svd = thin_svd(v_new * f.sigma.asDiagonal());
      f.v_star = svd.q;
      f.sigma = svd.s.cwiseSqrt();
      f.u_star = f.u_star * svd.w;
      f.u = f.u_star * f.sigma.asDiagonal();
      f.v = f.v_star * f.sigma.asDiagonal();
      refresh_centroids();
    }
    // U step, symmetric: M* = P_Omega(M - U V^T) + (U - U~) V^T.
    {
      const Eigen::MatrixXd u_tilde = detail::expand(f.user_centroids, f.user_groups);
      WorkingMatrix ms{m.rows, m.cols, {}, f.u - u_tilde, f.v};
      ms.sparse.reserve(m.entries.size());
      for (const auto& e : m.entries) ms.sparse.push_back({e.row, e.col, e.value - f.u.row(e.row).dot(f.v.row(e.col))});
      const Eigen::VectorXd scale = detail::ridge_scale(f.sigma, options.lambda);
      const Eigen::MatrixXd u_new = ms.right_product(f.v_star) * scale.asDiagonal() + u_tilde;
      const ThinSvd svd = thin_svd(u_new * f.sigma.asDiagonal());
      f.u_star = svd.q;
      f.sigma = svd.s.cwiseSqrt();
      f.v_star = f.v_star * svd.w;
      f.u = f.u_star * f.sigma.asDiagonal();
      f.v = f.v_star * f.sigma.asDiagonal();
      refresh_centroids();
    }
    check_finite(iter);
    f.iterations = iter;
    f.objective.push_back(latent_objective(m, f.u, f.v, f.u_tilde(), f.v_tilde(), options.lambda));
    const double rmse = detail::observed_rmse(m, f.u, f.v);
    f.rmse.push_back(rmse);
    const double change = prev_rmse > 0.0 ? std::abs(prev_rmse - rmse) / prev_rmse : std::abs(prev_rmse - rmse);
    prev_rmse = rmse;
    if (change < options.tolerance) {
      f.converged = true;
      break;
    }
  }
  return f;
}

}  // namespace gammli

#endif  // GAMMLI_LATENT_HPP_
