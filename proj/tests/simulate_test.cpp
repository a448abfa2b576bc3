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


#include "gammli/simulate.hpp"

#include <cmath>
#include <set>

#include "gtest/gtest.h"

namespace gammli {
namespace {

SimulationConfig small(double missing, std::uint64_t seed = 1) {
  SimulationConfig c;
  c.m = 120;
  c.n = 80;
  c.user_groups = 4;
  c.item_groups = 3;
  c.missing_rate = missing;
  c.seed = seed;
  return c;
}

TEST(Simulate, SignalAtHandPoint) {
  Eigen::RowVectorXd x = Eigen::RowVectorXd::Zero(5), z = Eigen::RowVectorXd::Zero(5);
  x(0) = 0.5;
  const Eigen::RowVectorXd u = Eigen::RowVectorXd::Zero(3), v = Eigen::RowVectorXd::Zero(3);
  // 2.5 + 0 + 0.5 e^4 + 0 + 0
  EXPECT_NEAR(simulation_signal(x, z, u, v), 2.5 + 0.5 * std::exp(4.0), 1e-12);
  EXPECT_NEAR(simulation_signal(x, z, u, v), 29.799, 1e-3);
}

TEST(Simulate, NoMissingnessObservesEveryPair) {
  const auto ds = generate(small(0.0));
  EXPECT_EQ(ds.observations.size(), 120u * 80u);
  std::size_t k = 0;
  for (int i = 0; i < 120; ++i)
    for (int j = 0; j < 80; ++j, ++k) {
      EXPECT_EQ(ds.observations.triples[k].user, i);
      EXPECT_EQ(ds.observations.triples[k].item, j);
    }
}

TEST(Simulate, ObservedCountNearExpectation) {
  const auto ds = generate(small(0.9));
  const double expected = 0.1 * 120 * 80;
  const double sd = std::sqrt(120 * 80 * 0.1 * 0.9);
  EXPECT_LT(std::abs(static_cast<double>(ds.observations.size()) - expected), 4 * sd);
}

TEST(Simulate, FeatureAndLatentRanges) {
  const auto ds = generate(small(0.5));
  for (const auto* t : {&ds.users, &ds.items}) {
    for (Eigen::Index c = 0; c < t->values().cols(); ++c) {
      EXPECT_DOUBLE_EQ(t->values().col(c).minCoeff(), 0.0);
      EXPECT_DOUBLE_EQ(t->values().col(c).maxCoeff(), 1.0);
    }
  }
  for (const auto* l : {&ds.user_latent, &ds.item_latent}) {
    for (Eigen::Index c = 0; c < l->cols(); ++c) {
      EXPECT_DOUBLE_EQ(l->col(c).minCoeff(), -1.0);
      EXPECT_DOUBLE_EQ(l->col(c).maxCoeff(), 1.0);
    }
  }
  EXPECT_EQ(ds.users.ids().front(), "u0");
  EXPECT_EQ(ds.items.ids().back(), "i79");
  EXPECT_EQ(ds.users.columns().front().name, "x1");
  EXPECT_EQ(ds.items.columns().back().name, "z5");
}

TEST(Simulate, ComponentsRecomputeFromEntities) {
  const auto ds = generate(small(0.7));
  for (std::size_t k = 0; k < ds.observations.size(); ++k) {
    const auto& t = ds.observations.triples[k];
    const auto e = static_cast<Eigen::Index>(k);
    const double s = simulation_signal(ds.users.values().row(t.user), ds.items.values().row(t.item),
                                       ds.user_latent.row(t.user), ds.item_latent.row(t.item));
    ASSERT_NEAR(s, ds.truth.noiseless()(e), 1e-10);
    ASSERT_NEAR(t.response, s + ds.truth.noise(e), 1e-10);
  }
  // unit-variance noise
  const auto& nz = ds.truth.noise;
  const double var = (nz.array() - nz.mean()).square().sum() / static_cast<double>(nz.size() - 1);
  EXPECT_NEAR(var, 1.0, 0.1);
}

TEST(Simulate, GroupsAreBalanced) {
  const auto ds = generate(small(0.5));
  std::vector<int> counts(4, 0);
  for (int g : ds.user_groups) ++counts[static_cast<std::size_t>(g)];
  for (int c : counts) EXPECT_EQ(c, 30);
}

TEST(Simulate, ClassificationLabelsThresholdContinuousResponse) {
  auto c = small(0.5);
  c.task = Task::kClassification;
  const auto ds = generate(c);
  const auto reg = generate(small(0.5));
  ASSERT_EQ(ds.observations.size(), reg.observations.size());
  for (std::size_t k = 0; k < ds.observations.size(); ++k) {
    const double y = reg.observations.triples[k].response;
    EXPECT_EQ(ds.observations.triples[k].response, y > 0.5 ? 1.0 : 0.0);
  }
}

TEST(Simulate, DeterministicPerSeed) {
  const auto a = generate(small(0.6, 9));
  const auto b = generate(small(0.6, 9));
  const auto c = generate(small(0.6, 10));
  EXPECT_TRUE(a.observations.responses() == b.observations.responses());
  EXPECT_TRUE(a.users == b.users);
  EXPECT_FALSE(a.users == c.users);
}

TEST(Simulate, NoiselessOption) {
  auto c = small(0.5);
  c.noise = false;
  const auto ds = generate(c);
  EXPECT_EQ(ds.truth.noise.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Simulate, RejectsBadConfig) {
  auto c = small(0.5);
  c.missing_rate = 1.0;
  EXPECT_THROW(generate(c), ValidationError);
  c = small(0.5);
  c.m = 0;
  EXPECT_THROW(generate(c), ValidationError);
}

TEST(ColdStart, PartitionsByHeldOutEntities) {
  const auto ds = generate(small(0.5));
  const auto cs = cold_start_split(ds.observations, 0.1, 3);
  EXPECT_EQ(cs.cold_users.size(), 12u);
  EXPECT_EQ(cs.cold_items.size(), 8u);
  EXPECT_EQ(cs.train.size() + cs.cold.size(), ds.observations.size());
  const std::set<int> cu(cs.cold_users.begin(), cs.cold_users.end());
  const std::set<int> ci(cs.cold_items.begin(), cs.cold_items.end());
  for (const auto& t : cs.train.triples) {
    EXPECT_FALSE(cu.count(t.user));
    EXPECT_FALSE(ci.count(t.item));
  }
  for (const auto& t : cs.cold.triples) EXPECT_TRUE(cu.count(t.user) || ci.count(t.item));
  EXPECT_THROW(cold_start_split(ds.observations, 0.0, 3), ValidationError);
}

}  // namespace
}  // namespace gammli
