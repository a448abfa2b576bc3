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


#include "gammli/baseline.hpp"

#include <random>

#include "gtest/gtest.h"

namespace gammli {
namespace {

ObservationSet low_rank(int m, int n, int rank, double keep, std::uint64_t seed, Eigen::MatrixXd* full = nullptr,
                        double shift = 3.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::bernoulli_distribution coin(keep);
  Eigen::MatrixXd a(m, rank), b(n, rank);
  for (auto* x : {&a, &b})
    for (Eigen::Index i = 0; i < x->size(); ++i) x->data()[i] = g(rng);
  const Eigen::MatrixXd y = (a * b.transpose()).array() + shift;
  if (full) *full = y;
  ObservationSet obs{{}, Task::kRegression, m, n};
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      if (coin(rng)) obs.triples.push_back({i, j, y(i, j)});
  return obs;
}

TEST(Baseline, RecoversFullyObservedLowRankMatrix) {
  Eigen::MatrixXd y;
  // The mean shift adds one to the rank.
  const auto obs = low_rank(30, 25, 4, 1.0, 1, &y);
  BaselineOptions opt;
  opt.lambdas = {0.0};
  opt.tolerance = 1e-12;
  opt.max_iterations = 500;
  const auto b = baseline_svd(obs, obs.with_triples({}), opt);
  double worst = 0.0;
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 25; ++j) worst = std::max(worst, std::abs(b.predict(i, j) - y(i, j)));
  EXPECT_LT(worst, 1e-6);
}

TEST(Baseline, DefaultSettingsRecoverExactRankFiveMatrix) {
  Eigen::MatrixXd y;
  const auto obs = low_rank(30, 25, 5, 1.0, 4, &y, 0.0);
  const auto b = baseline_svd(obs, obs, BaselineOptions{});
  Eigen::MatrixXd fitted(30, 25);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 25; ++j) fitted(i, j) = b.predict(i, j);
  // Rank-5 truncated SVD of an exact rank-5 matrix is the matrix itself.
  Eigen::BDCSVD<Eigen::MatrixXd> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::MatrixXd oracle = svd.matrixU().leftCols(5) * svd.singularValues().head(5).asDiagonal() *
                                 svd.matrixV().leftCols(5).transpose();
  EXPECT_LT((fitted - oracle).norm() / oracle.norm(), 1e-4);
}

TEST(Baseline, MatchesTruncatedSvdOfCenteredMatrix) {
  Eigen::MatrixXd y;
  const auto obs = low_rank(30, 25, 5, 1.0, 4, &y, 0.0);
  BaselineOptions opt;
  opt.tolerance = 1e-14;
  opt.max_iterations = 2000;
  const auto b = baseline_svd(obs, obs, opt);
  Eigen::MatrixXd fitted(30, 25);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 25; ++j) fitted(i, j) = b.predict(i, j);
  const double mu = y.mean();
  const Eigen::MatrixXd centered = y.array() - mu;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::MatrixXd oracle = (svd.matrixU().leftCols(5) * svd.singularValues().head(5).asDiagonal() *
                                  svd.matrixV().leftCols(5).transpose()).array() + mu;
  EXPECT_LT((fitted - oracle).norm() / oracle.norm(), 1e-8);
}

TEST(Baseline, ConstantResponsesPredictConstant) {
  ObservationSet obs{{}, Task::kRegression, 6, 5};
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 5; ++j)
      if ((i + j) % 2 == 0) obs.triples.push_back({i, j, 2.5});
  const auto b = baseline_svd(obs, obs);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 5; ++j) EXPECT_NEAR(b.predict(i, j), 2.5, 1e-12);
}

TEST(Baseline, UnseenEntitiesFallBackToMean) {
  ObservationSet obs{{{0, 0, 1.0}, {0, 1, 3.0}, {1, 0, 2.0}}, Task::kRegression, 3, 3};
  const auto b = baseline_svd(obs, obs.with_triples({}));
  EXPECT_DOUBLE_EQ(b.predict(2, 0), 2.0);
  EXPECT_DOUBLE_EQ(b.predict(0, 2), 2.0);
}

TEST(Baseline, SelectsLambdaWithLowestValidationError) {
  const auto all = low_rank(40, 30, 3, 0.5, 2);
  std::vector<Triple> tr, va;
  for (std::size_t k = 0; k < all.triples.size(); ++k) (k % 5 == 0 ? va : tr).push_back(all.triples[k]);
  for (auto& t : tr) t.response += 0.3 * std::sin(7.0 * t.user + t.item);
  const auto train = all.with_triples(tr);
  const auto valid = all.with_triples(va);
  BaselineOptions opt;
  const auto chosen = baseline_svd(train, valid, opt);
  double best = std::numeric_limits<double>::infinity(), best_lambda = -1;
  for (double lam : opt.lambdas) {
    const auto b = detail::fit_baseline_once(train, lam, opt);
    const double err = (b.predict(va) - valid.responses()).squaredNorm();
    if (err < best) {
      best = err;
      best_lambda = lam;
    }
  }
  EXPECT_EQ(chosen.lambda, best_lambda);
}

TEST(Baseline, RejectsEmptyTraining) {
  ObservationSet obs{{}, Task::kRegression, 2, 2};
  EXPECT_THROW(baseline_svd(obs, obs), ValidationError);
}

}  // namespace
}  // namespace gammli
