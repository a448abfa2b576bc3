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

#include "gammli/latent.hpp"

#include <random>
#include <vector>

#include "gtest/gtest.h"

namespace gammli {
namespace {

Eigen::MatrixXd gaussian(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = g(rng);
  return m;
}

Clustering from_assignments(std::vector<int> a, int k) {
  Clustering c;
  c.k = k;
  c.assignments = std::move(a);
  return c;
}

ResidualMatrix full(const Eigen::MatrixXd& m) {
  ResidualMatrix r{static_cast<int>(m.rows()), static_cast<int>(m.cols()), {}};
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) r.entries.push_back({i, j, m(i, j)});
  return r;
}

ResidualMatrix sparse(const Eigen::MatrixXd& m, double keep, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ResidualMatrix r{static_cast<int>(m.rows()), static_cast<int>(m.cols()), {}};
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j)
      if (u(rng) < keep) r.entries.push_back({i, j, m(i, j)});
  return r;
}

// Sum of squared discarded singular values: the best rank-r residual.
double truncated_svd_objective(const Eigen::MatrixXd& m, int r) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  return s.tail(s.size() - r).squaredNorm();
}

TEST(CentroidTest, HandExample) {
  Eigen::MatrixXd rows(3, 2);
  rows << 1, 0, 3, 0, 10, 2;
  const auto out = centroid_matrices(rows, from_assignments({0, 0, 1}, 2));
  Eigen::MatrixXd expected(3, 2);
  expected << 2, 0, 2, 0, 10, 2;
  EXPECT_EQ(out, expected);
}

TEST(CentroidTest, SingletonsAndSingleCluster) {
  const Eigen::MatrixXd m = gaussian(6, 3, 1);
  EXPECT_EQ(centroid_matrices(m, Clustering::singletons(m)), m);
  const auto one = centroid_matrices(m, from_assignments(std::vector<int>(6, 0), 1));
  const Eigen::RowVectorXd mean = m.colwise().mean();
  for (int i = 0; i < 6; ++i) EXPECT_TRUE(one.row(i).isApprox(mean, 1e-14));
}

TEST(RidgeUpdateTest, IdentitySigmaNoPenalty) {
  const Eigen::MatrixXd ms = gaussian(5, 4, 2);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(5, 2, 3));
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(5, 2);
  const Eigen::MatrixXd out = ridge_update(ms, q, Eigen::VectorXd::Ones(2), 0.0);
  EXPECT_TRUE(out.isApprox(q.transpose() * ms, 1e-14));
}

TEST(RidgeUpdateTest, ShrinksMonotonicallyWithLambda) {
  const Eigen::MatrixXd ms = gaussian(6, 5, 4);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(6, 3, 5));
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(6, 3);
  const Eigen::VectorXd sigma = (Eigen::VectorXd(3) << 3.0, 1.5, 0.2).finished();
  double prev = std::numeric_limits<double>::infinity();
  for (double lambda : {0.0, 0.1, 1.0, 10.0, 1e3, 1e6}) {
    const double norm = ridge_update(ms, q, sigma, lambda).norm();
    EXPECT_LT(norm, prev);
    prev = norm;
  }
  EXPECT_LT(prev, 1e-5);
}

// Ridge regression per column through an augmented least-squares system,
// using neither the diagonal closed form nor orthonormality of U*.
Eigen::MatrixXd augmented_ridge(const Eigen::MatrixXd& ms, const Eigen::MatrixXd& a, double lambda) {
  const auto m = a.rows();
  const auto r = a.cols();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(m + r, r);
  aug.topRows(m) = a;
  aug.bottomRows(r) = std::sqrt(lambda) * Eigen::MatrixXd::Identity(r, r);
  Eigen::MatrixXd out(r, ms.cols());
  for (Eigen::Index j = 0; j < ms.cols(); ++j) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m + r);
    rhs.head(m) = ms.col(j);
    out.col(j) = aug.colPivHouseholderQr().solve(rhs);
  }
  return out;
}

TEST(RidgeUpdateTest, MatchesAugmentedLeastSquares) {
  const Eigen::MatrixXd ms = gaussian(5, 4, 6);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(5, 2, 7));
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(5, 2);
  const Eigen::VectorXd sigma = (Eigen::VectorXd(2) << 1.7, 0.4).finished();
  const Eigen::MatrixXd expected = augmented_ridge(ms, q * sigma.asDiagonal(), 0.7);
  EXPECT_LT((ridge_update(ms, q, sigma, 0.7) - expected).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(RidgeUpdateTest, ZeroLambdaWithZeroSingularValueIsSingular) {
  const Eigen::MatrixXd ms = gaussian(4, 3, 8);
  const Eigen::MatrixXd q = Eigen::MatrixXd::Identity(4, 2);
  EXPECT_THROW(ridge_update(ms, q, Eigen::Vector2d(1.0, 0.0), 0.0), TrainingError);
  EXPECT_NO_THROW(ridge_update(ms, q, Eigen::Vector2d(1.0, 0.0), 0.1));
}

TEST(RidgeUpdateTest, SparsePlusLowRankMatchesDense) {
  const ResidualMatrix m = sparse(gaussian(9, 7, 9), 0.5, 10);
  const Eigen::MatrixXd u = gaussian(9, 2, 11);
  const Eigen::MatrixXd v = gaussian(7, 2, 12);
  const Eigen::MatrixXd vt = gaussian(7, 2, 13);
  const WorkingMatrix w = working_matrix(m, u, v, vt);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(u);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(9, 2);
  const Eigen::Vector2d sigma(2.0, 0.5);
  EXPECT_LT((ridge_update(w, q, sigma, 0.3) - ridge_update(w.dense(), q, sigma, 0.3)).cwiseAbs().maxCoeff(), 1e-12);
  const Eigen::MatrixXd p = gaussian(7, 2, 14);
  EXPECT_LT((w.right_product(p) - w.dense() * p).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(WorkingMatrixTest, HandComputedThreeByThree) {
  ResidualMatrix m{3, 3, {{0, 0, 1.0}, {0, 2, 2.0}, {1, 1, 3.0}, {2, 0, 4.0}}};
  Eigen::MatrixXd u(3, 2), v(3, 2), vt(3, 2);
  u << 1, 0, 0, 1, 1, 1;
  v << 1, 1, 0, 1, 2, 0;
  vt << 0.5, 1, 0.5, 1, 2, 0;
  Eigen::MatrixXd expected(3, 3);
  expected << 0.5, -0.5, 0, 0, 2, 0, 2.5, -0.5, 0;
  EXPECT_EQ(working_matrix(m, u, v, vt).dense(), expected);
}

TEST(WorkingMatrixTest, DegenerateCases) {
  const Eigen::MatrixXd u = gaussian(4, 2, 15);
  const Eigen::MatrixXd v = gaussian(5, 2, 16);
  ResidualMatrix exact = full(u * v.transpose());
  EXPECT_LT(working_matrix(exact, u, v, v).dense().cwiseAbs().maxCoeff(), 1e-14);
  const Eigen::MatrixXd vt = gaussian(5, 2, 17);
  ResidualMatrix none{4, 5, {}};
  EXPECT_TRUE(working_matrix(none, u, v, vt).dense().isApprox(u * (v - vt).transpose()));
}

TEST(ThinSvdTest, OrthogonalColumns) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(4, 2);
  a(0, 0) = 3.0;
  a(2, 1) = -2.0;
  const auto s = thin_svd(a);
  EXPECT_NEAR(s.s(0), 3.0, 1e-14);
  EXPECT_NEAR(s.s(1), 2.0, 1e-14);
}

TEST(ThinSvdTest, ZeroMatrix) {
  const auto s = thin_svd(Eigen::MatrixXd::Zero(5, 3));
  EXPECT_EQ(s.s.norm(), 0.0);
  EXPECT_TRUE((s.q.transpose() * s.q).isIdentity(1e-12));
}

TEST(ThinSvdTest, ReconstructsRandomMatrix) {
  const Eigen::MatrixXd a = gaussian(50, 3, 18);
  const auto s = thin_svd(a);
  EXPECT_LT((s.q * s.s.asDiagonal() * s.w.transpose() - a).norm(), 1e-10 * a.norm());
  EXPECT_LT((s.q.transpose() * s.q - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_GE(s.s(0), s.s(1));
  EXPECT_GE(s.s(1), s.s(2));
}

TEST(FitLatentTest, ExactRankRecoveryMatchesTruncatedSvd) {
  const Eigen::MatrixXd m = gaussian(20, 3, 19) * gaussian(15, 3, 20).transpose();
  LatentOptions opt;
  opt.rank = 3;
  opt.lambda = 0.0;
  opt.max_iterations = 500;
  opt.tolerance = 1e-12;
  const Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(20, 1);
  const auto f = fit_latent(full(m), Clustering::singletons(Eigen::MatrixXd(20, 0)),
                            Clustering::singletons(Eigen::MatrixXd(15, 0)), opt);
  EXPECT_LT((f.u * f.v.transpose() - m).norm(), 1e-6 * m.norm());
  EXPECT_LE(std::abs(f.objective.back() - truncated_svd_objective(m, 3)), 1e-6 * m.squaredNorm());
}

TEST(FitLatentTest, NoisyFullMatrixConvergesToTruncatedSvd) {
  const Eigen::MatrixXd m = gaussian(20, 3, 21) * gaussian(15, 3, 22).transpose() * 3.0 + 0.1 * gaussian(20, 15, 23);
  LatentOptions opt;
  opt.rank = 3;
  opt.max_iterations = 5000;
  opt.tolerance = 1e-15;
  const auto f = fit_latent(full(m), Clustering::singletons(Eigen::MatrixXd(20, 0)),
                            Clustering::singletons(Eigen::MatrixXd(15, 0)), opt);
  const double oracle = truncated_svd_objective(m, 3);
  EXPECT_LE(std::abs(f.objective.back() - oracle), 1e-6 * oracle);
}

TEST(FitLatentTest, ZeroResidualsGiveZeroFit) {
  ResidualMatrix m = sparse(Eigen::MatrixXd::Zero(10, 8), 0.4, 24);
  LatentOptions opt;
  opt.lambda = 1.0;
  const auto f = fit_latent(m, Clustering::singletons(Eigen::MatrixXd(10, 0)),
                            Clustering::singletons(Eigen::MatrixXd(8, 0)), opt);
  for (const auto& e : m.entries) EXPECT_NEAR(f.predict(e.row, e.col), 0.0, 1e-8);
}

std::vector<int> random_groups(int count, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<int> a(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) a[static_cast<std::size_t>(i)] = i < k ? i : static_cast<int>(rng() % static_cast<std::uint64_t>(k));
  return a;
}

TEST(FitLatentTest, LargeLambdaCollapsesRowsOntoCentroids) {
  const Eigen::MatrixXd m = gaussian(30, 3, 25) * gaussian(25, 3, 26).transpose();
  const auto users = from_assignments(random_groups(30, 4, 27), 4);
  const auto items = from_assignments(random_groups(25, 3, 28), 3);
  LatentOptions opt;
  opt.lambda = 1e6;
  opt.seed = 3;
  const auto f = fit_latent(sparse(m, 0.5, 29), users, items, opt);
  opt.lambda = 0.0;
  const auto free = fit_latent(sparse(m, 0.5, 29), users, items, opt);
  const double scale = std::max(free.u.cwiseAbs().maxCoeff(), free.v.cwiseAbs().maxCoeff());
  EXPECT_LT((f.u - f.u_tilde()).cwiseAbs().maxCoeff(), 1e-3 * scale);
  EXPECT_LT((f.v - f.v_tilde()).cwiseAbs().maxCoeff(), 1e-3 * scale);
  EXPECT_GT((free.u - free.u_tilde()).cwiseAbs().maxCoeff(), 1e-1 * scale);
}

TEST(FitLatentTest, ObjectiveNonIncreasingOnSparseGroupedInstances) {
  for (std::uint64_t trial = 0; trial < 5; ++trial) {
    const Eigen::MatrixXd m = gaussian(40, 3, 100 + trial) * gaussian(30, 3, 200 + trial).transpose() +
                              0.3 * gaussian(40, 30, 300 + trial);
    const auto users = from_assignments(random_groups(40, 5, 400 + trial), 5);
    const auto items = from_assignments(random_groups(30, 4, 500 + trial), 4);
    LatentOptions opt;
    opt.lambda = 0.5 + 3.0 * static_cast<double>(trial);
    opt.seed = trial;
    opt.max_iterations = 200;
    opt.tolerance = 0.0;
    const auto f = fit_latent(sparse(m, 0.3, 600 + trial), users, items, opt);
    for (std::size_t t = 1; t < f.objective.size(); ++t) {
      EXPECT_LE(f.objective[t], f.objective[t - 1] + 1e-8 * f.objective[t - 1]) << "trial " << trial << " sweep " << t;
    }
  }
}

TEST(FitLatentTest, FactorsStayOrthonormalAndBalanced) {
  const Eigen::MatrixXd m = gaussian(25, 3, 30) * gaussian(20, 3, 31).transpose();
  const auto users = from_assignments(random_groups(25, 3, 32), 3);
  const auto items = from_assignments(random_groups(20, 3, 33), 3);
  LatentOptions opt;
  opt.lambda = 2.0;
  const auto f = fit_latent(sparse(m, 0.4, 34), users, items, opt);
  EXPECT_LT((f.u_star.transpose() * f.u_star - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LT((f.v_star.transpose() * f.v_star - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_TRUE(f.u.isApprox(f.u_star * f.sigma.asDiagonal()));
  EXPECT_TRUE(f.v.isApprox(f.v_star * f.sigma.asDiagonal()));
  for (int c = 1; c < 3; ++c) EXPECT_GE(f.sigma(c - 1), f.sigma(c));
  // Centroid rows are the cluster means of the final factors.
  EXPECT_TRUE(f.u_tilde().isApprox(centroid_matrices(f.u, users)));
}

TEST(FitLatentTest, SingletonClustersCarryNoPenalty) {
  const Eigen::MatrixXd m = gaussian(12, 2, 35) * gaussian(10, 2, 36).transpose();
  const ResidualMatrix r = sparse(m, 0.6, 37);
  LatentOptions opt;
  opt.rank = 2;
  opt.lambda = 4.0;
  const auto f = fit_latent(r, Clustering::singletons(Eigen::MatrixXd(12, 0)),
                            Clustering::singletons(Eigen::MatrixXd(10, 0)), opt);
  EXPECT_EQ(f.u_tilde(), f.u);
  EXPECT_EQ(f.v_tilde(), f.v);
  EXPECT_NEAR(f.objective.back(), latent_objective(r, f.u, f.v, f.u, f.v, 0.0), 1e-12);
}

TEST(FitLatentTest, SameSeedSameFactors) {
  const ResidualMatrix r = sparse(gaussian(15, 12, 38), 0.5, 39);
  const auto users = from_assignments(random_groups(15, 3, 40), 3);
  const auto items = from_assignments(random_groups(12, 2, 41), 2);
  LatentOptions opt;
  opt.lambda = 1.0;
  opt.seed = 8;
  const auto a = fit_latent(r, users, items, opt);
  const auto b = fit_latent(r, users, items, opt);
  EXPECT_EQ(a.u, b.u);
  EXPECT_EQ(a.v, b.v);
}

}  // namespace
}  // namespace gammli
