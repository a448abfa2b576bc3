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

#include "gammli/kmeans.hpp"

#include <map>
#include <random>

#include "gtest/gtest.h"

namespace gammli {
namespace {

double choose2(double x) { return x * (x - 1.0) / 2.0; }

// Adjusted Rand index from the contingency table.
double adjusted_rand(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  double index = 0, sa = 0, sb = 0;
  for (const auto& [k, v] : joint) index += choose2(v);
  for (const auto& [k, v] : ra) sa += choose2(v);
  for (const auto& [k, v] : rb) sb += choose2(v);
  const double expected = sa * sb / choose2(static_cast<double>(a.size()));
  return (index - expected) / (0.5 * (sa + sb) - expected);
}

TEST(KMeansTest, SingleClusterIsTheMean) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Eigen::MatrixXd p(40, 3);
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 3; ++j) p(i, j) = g(rng);
  const auto c = kmeans(p, 1, 7);
  EXPECT_TRUE(c.centroids.row(0).isApprox(p.colwise().mean(), 1e-12));
  for (int a : c.assignments) EXPECT_EQ(a, 0);
  EXPECT_NEAR(c.inertia, (p.rowwise() - p.colwise().mean()).squaredNorm(), 1e-9);
}

TEST(KMeansTest, RecoversSeparatedBlobs) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 0.3);
  const double centers[4][2] = {{0, 0}, {10, 0}, {0, 10}, {10, 10}};
  Eigen::MatrixXd p(200, 2);
  std::vector<int> truth;
  for (int i = 0; i < 200; ++i) {
    const int b = i % 4;
    p(i, 0) = centers[b][0] + g(rng);
    p(i, 1) = centers[b][1] + g(rng);
    truth.push_back(b);
  }
  const auto c = kmeans(p, 4, 3);
  EXPECT_DOUBLE_EQ(adjusted_rand(truth, c.assignments), 1.0);
  EXPECT_EQ(c.counts(), std::vector<int>(4, 50));
}

TEST(KMeansTest, AssignClusterReproducesTrainingAssignments) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd p(150, 4);
  for (Eigen::Index k = 0; k < p.size(); ++k) p.data()[k] = u(rng);
  for (int k : {2, 5, 9}) {
    const auto c = kmeans(p, k, 11);
    for (int i = 0; i < 150; ++i) EXPECT_EQ(assign_cluster(p.row(i), c), c.assignments[static_cast<std::size_t>(i)]);
  }
}

TEST(KMeansTest, OneClusterPerPointHasZeroInertia) {
  Eigen::MatrixXd p(6, 2);
  p << 0, 0, 1, 0, 0, 1, 5, 5, 2, 3, -1, 4;
  const auto c = kmeans(p, 6, 4);
  EXPECT_EQ(c.inertia, 0.0);
  std::vector<int> sorted = c.assignments;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 6; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
}

TEST(KMeansTest, RejectsInvalidK) {
  Eigen::MatrixXd p(3, 1);
  p << 1, 1, 2;
  EXPECT_THROW(kmeans(p, 0, 1), ValidationError);
  EXPECT_THROW(kmeans(p, 3, 1), ValidationError);
  EXPECT_NO_THROW(kmeans(p, 2, 1));
  EXPECT_THROW(kmeans(Eigen::MatrixXd(0, 2), 1, 1), ValidationError);
  EXPECT_EQ(count_distinct_rows(p), 2);
}

TEST(KMeansTest, AssignClusterBreaksTiesTowardLowestIndex) {
  Clustering c;
  c.k = 3;
  c.centroids.resize(3, 1);
  c.centroids << 2.0, 0.0, 1.0;
  EXPECT_EQ(assign_cluster(Eigen::RowVectorXd::Constant(1, 0.5), c), 1);
  EXPECT_EQ(assign_cluster(Eigen::RowVectorXd::Constant(1, 1.5), c), 0);
  EXPECT_EQ(assign_cluster(Eigen::RowVectorXd::Constant(1, 0.9), c), 2);
  EXPECT_THROW(assign_cluster(Eigen::RowVectorXd::Zero(2), c), ValidationError);
}

TEST(KMeansTest, DeterministicAndInertiaNonIncreasing) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd p(150, 4);
  for (int i = 0; i < 150; ++i)
    for (int j = 0; j < 4; ++j) p(i, j) = u(rng);
  const auto a = kmeans(p, 7, 11);
  const auto b = kmeans(p, 7, 11);
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(a.centroids, b.centroids);
  ASSERT_FALSE(a.inertia_history.empty());
  for (std::size_t t = 1; t < a.inertia_history.size(); ++t)
    EXPECT_LE(a.inertia_history[t], a.inertia_history[t - 1] + 1e-12);
  for (int k : a.counts()) EXPECT_GT(k, 0);
}

}  // namespace
}  // namespace gammli
