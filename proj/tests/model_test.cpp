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


#include "gammli/model.hpp"

#include <cmath>
#include <random>

#include "gammli/explain.hpp"
#include "gammli/model_io.hpp"
#include "gtest/gtest.h"
#include "test_support.hpp"

namespace gammli {
namespace {

using testing::make_toy;
using testing::Toy;

FitConfig small_config(int epochs = 150) {
  FitConfig c;
  c.train.max_epochs = epochs;
  c.train.fine_tune_epochs = 30;
  c.train.seed = 21;
  c.user_groups = 3;
  c.item_groups = 4;
  c.rank = 2;
  c.lambda = 0.5;
  return c;
}

// Two latent blocks tied to x2 / z2 so the latent stage has something to fit.
const testing::ResponseFn kMixed = [](const auto& x, const auto& z, int, int) {
  return 3.0 * x(0) + 2.0 * z(0) * z(0) + (x(1) > 0.5 ? 1.0 : -1.0) * (z(1) > 0.5 ? 1.0 : -1.0);
};

// Fitted once and shared by the tests below (fits are deterministic).
const std::pair<Toy, FitResult>& mixed_fit(Task task = Task::kRegression) {
  static std::map<Task, std::pair<Toy, FitResult>> cache;
  auto it = cache.find(task);
  if (it == cache.end()) {
    Toy t = make_toy(60, 50, {"x1", "x2"}, {"z1", "z2"}, 0.6,
                     task == Task::kRegression ? kMixed
                                               : testing::ResponseFn([](const auto& x, const auto& z, int u, int i) {
                                                   return kMixed(x, z, u, i) - 2.5;
                                                 }),
                     0.2, 31, task);
    FitResult r = fit(FitInput{t.users, t.items, t.split}, small_config());
    it = cache.emplace(task, std::make_pair(std::move(t), std::move(r))).first;
  }
  return it->second;
}

double sum_terms(const PredictionResult& p) {
  double s = 0.0;
  for (const auto& t : p.terms) s += t.value;
  return s;
}

// Independent composition from the model's stored parts.
double hand_score(const GammliModel& m, const Eigen::RowVectorXd& xs, const Eigen::RowVectorXd& zs,
                  const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& v) {
  double s = m.main.intercept;
  for (const auto& e : m.main.effects) {
    if (!e.retained) continue;
    const auto& row = e.side == Side::kUser ? xs : zs;
    const auto& f = (e.side == Side::kUser ? m.users : m.items).features()[static_cast<std::size_t>(e.feature)];
    s += std::get<Subnet>(e.fn)(row(f.columns.front()));
  }
  for (const auto& p : m.manifest.pairs) {
    if (!p.retained) continue;
    const int a = m.users.features()[static_cast<std::size_t>(p.user_feature)].columns.front();
    const int b = m.items.features()[static_cast<std::size_t>(p.item_feature)].columns.front();
    s += p.net(xs(a), zs(b));
  }
  return s + u.dot(v);
}

TEST(Residuals, Examples) {
  Eigen::VectorXd y(3), f(3);
  y << 1.0, 2.0, -1.0;
  EXPECT_TRUE(residuals(y, y, Task::kRegression).isZero(0.0));
  Eigen::VectorXd lab(2), zero = Eigen::VectorXd::Zero(2);
  lab << 1.0, 0.0;
  const Eigen::VectorXd r = residuals(lab, zero, Task::kClassification);
  EXPECT_DOUBLE_EQ(r(0), 1.0);
  EXPECT_DOUBLE_EQ(r(1), -1.0);
  f << 0.3, -0.2, 0.0;
  Eigen::VectorXd l3(3);
  l3 << 1.0, 0.0, 1.0;
  const Eigen::VectorXd r3 = residuals(l3, f, Task::kClassification);
  for (int k = 0; k < 3; ++k) {
    const double yp = 2.0 * l3(k) - 1.0;
    EXPECT_NEAR(r3(k), 2.0 * yp / (1.0 + std::exp(2.0 * yp * f(k))), 1e-15);
  }
}

TEST(Predict, WarmDecompositionMatchesHandComposition) {
  const auto& [toy, fr] = mixed_fit();
  const auto& m = fr.model;
  for (const auto& t : toy.split.test.triples) {
    const auto& uid = toy.users.ids()[static_cast<std::size_t>(t.user)];
    const auto& iid = toy.items.ids()[static_cast<std::size_t>(t.item)];
    const auto p = predict(m, uid, iid);
    if (p.cold_user || p.cold_item) continue;
    EXPECT_NEAR(sum_terms(p), p.score, 1e-12);
    const int ur = *m.users.find(uid), ir = *m.items.find(iid);
    EXPECT_NEAR(p.score, hand_score(m, m.users.values().row(ur), m.items.values().row(ir), m.latent.u.row(ur), m.latent.v.row(ir)),
                1e-12);
    EXPECT_EQ(p.value, p.score);
  }
}

TEST(Predict, ClassificationProbabilityUsesHalfLogOdds) {
  const auto& [toy, fr] = mixed_fit(Task::kClassification);
  const auto p = predict(fr.model, fr.model.users.ids()[0], fr.model.items.ids()[0]);
  EXPECT_NEAR(p.value, 1.0 / (1.0 + std::exp(-2.0 * p.score)), 1e-15);
  EXPECT_NEAR(sum_terms(p), p.score, 1e-12);
}

TEST(Predict, InterceptOnlyModel) {
  GammliModel m = mixed_fit().second.model;
  for (auto& e : m.main.effects) e.retained = false;
  for (auto& p : m.manifest.pairs) p.retained = false;
  m.latent.u.setZero();
  m.latent.v.setZero();
  m.latent.user_centroids.setZero();
  m.latent.item_centroids.setZero();
  const auto& toy = mixed_fit().first;
  const Eigen::VectorXd s = predict_triples(m, toy.users, toy.items, toy.observations.triples);
  EXPECT_TRUE((s.array() == m.main.intercept).all());
  m.task = Task::kClassification;
  const auto p = predict(m, m.users.ids()[1], m.items.ids()[2]);
  EXPECT_DOUBLE_EQ(p.value, inverse_link(Task::kClassification, m.main.intercept));
}

TEST(PredictCold, NewUserWithExistingFeaturesJoinsSameCluster) {
  const auto& [toy, fr] = mixed_fit();
  const auto& m = fr.model;
  for (int r = 0; r < m.users.rows(); r += 7) {
    const auto raw_row = *toy.users.find(m.users.ids()[static_cast<std::size_t>(r)]);
    const auto p = predict_cold(m, Eigen::RowVectorXd(toy.users.values().row(raw_row)), std::nullopt, "new", m.items.ids()[0]);
    EXPECT_TRUE(p.cold_user);
    EXPECT_FALSE(p.cold_item);
    EXPECT_EQ(p.user_group, m.user_clusters.assignments[static_cast<std::size_t>(r)]);
    const Eigen::RowVectorXd centroid = m.latent.user_centroids.row(p.user_group);
    EXPECT_NEAR(p.terms.back().value, centroid.dot(m.latent.v.row(0)), 1e-12);
    EXPECT_NEAR(p.score, hand_score(m, m.users.values().row(r), m.items.values().row(0), centroid, m.latent.v.row(0)), 1e-12);
    EXPECT_NEAR(sum_terms(p), p.score, 1e-12);
  }
}

TEST(PredictCold, BothNewUsesCentroidProduct) {
  const auto& [toy, fr] = mixed_fit();
  const auto& m = fr.model;
  Eigen::RowVectorXd x(2), z(2);
  x << 0.25, 0.9;
  z << 0.6, 0.1;
  const auto p = predict_cold(m, x, z);
  EXPECT_TRUE(p.cold_user && p.cold_item);
  const auto g = group_interaction_matrix(m);
  EXPECT_EQ(p.terms.back().value, g.matrix(p.user_group, p.item_group));
  EXPECT_NEAR(p.terms.back().value,
              m.latent.user_centroids.row(p.user_group).dot(m.latent.item_centroids.row(p.item_group)), 1e-12);
}

TEST(PredictCold, ReducesToWarmWhenLatentRowIsItsCentroid) {
  const auto& [toy, fr] = mixed_fit();
  GammliModel m = fr.model;
  const int r = 3;
  const int g = m.user_clusters.assignments[r];
  m.latent.u.row(r) = m.latent.user_centroids.row(g);
  const auto uid = m.users.ids()[r];
  const auto warm = predict(m, uid, m.items.ids()[1]);
  const auto raw = *toy.users.find(uid);
  const auto cold = predict_cold(m, Eigen::RowVectorXd(toy.users.values().row(raw)), std::nullopt, "", m.items.ids()[1]);
  EXPECT_EQ(warm.score, cold.score);
}

TEST(PredictCold, Errors) {
  const auto& m = mixed_fit().second.model;
  EXPECT_THROW(predict(m, "nobody", m.items.ids()[0]), ValidationError);
  EXPECT_THROW(predict_cold(m, Eigen::RowVectorXd::Zero(3), std::nullopt, "", m.items.ids()[0]), ValidationError);
}

TEST(Fit, RetainedEffectsAreCentered) {
  const auto& [toy, fr] = mixed_fit();
  const auto& m = fr.model;
  // Training triples refer to raw rows; map to the model's warm rows.
  std::vector<Triple> tr;
  for (const auto& t : toy.split.train.triples) {
    tr.push_back({*m.users.find(toy.users.ids()[static_cast<std::size_t>(t.user)]),
                  *m.items.find(toy.items.ids()[static_cast<std::size_t>(t.item)]), t.response});
  }
  for (const auto& e : m.main.effects) {
    if (!e.retained) continue;
    EXPECT_LT(std::abs(detail::evaluate(e.fn, detail::main_inputs(e, tr, m.users, m.items)).mean()), 1e-8) << e.name;
  }
  for (const auto& p : m.manifest.pairs) {
    if (!p.retained) continue;
    EXPECT_LT(std::abs(detail::evaluate(p.net, detail::pair_inputs(p, tr, m.users, m.items)).mean()), 1e-8) << p.name;
  }
}

TEST(Fit, DeterministicForFixedSeed) {
  const auto& [toy, fr] = mixed_fit();
  const auto again = fit(FitInput{toy.users, toy.items, toy.split}, small_config());
  EXPECT_EQ(model_to_string(again.model), model_to_string(fr.model));
}

TEST(Fit, RejectsInconsistentInput) {
  const auto& toy = mixed_fit().first;
  DataSplit s = toy.split;
  s.validation.triples.clear();
  EXPECT_THROW(fit(FitInput{toy.users, toy.items, s}, small_config()), ValidationError);
  std::mt19937_64 rng(1);
  const auto clash = testing::uniform_table("i", toy.items.rows(), {"x1", "z2"}, rng);
  EXPECT_THROW(fit(FitInput{toy.users, clash, toy.split}, small_config()), ValidationError);
}

TEST(Fit, StageFailuresNameTheStage) {
  try {
    detail::run_stage("stage 2 (manifest interactions)", []() -> int { throw std::runtime_error("non-finite loss"); });
    FAIL() << "expected a training error";
  } catch (const TrainingError& e) {
    EXPECT_STREQ(e.what(), "stage 2 (manifest interactions): non-finite loss");
  }
  EXPECT_THROW(detail::run_stage("x", []() -> int { throw ValidationError("bad"); }), ValidationError);
}

TEST(Persistence, RoundTripIsBitIdentical) {
  const auto& [toy, fr] = mixed_fit();
  const std::string text = model_to_string(fr.model);
  const GammliModel back = model_from_string(text);
  EXPECT_EQ(model_to_string(back), text);
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> u(0, toy.users.rows() - 1), i(0, toy.items.rows() - 1);
  std::vector<Triple> pairs;
  for (int k = 0; k < 100; ++k) pairs.push_back({u(rng), i(rng), 0.0});
  const Eigen::VectorXd a = predict_triples(fr.model, toy.users, toy.items, pairs);
  const Eigen::VectorXd b = predict_triples(back, toy.users, toy.items, pairs);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(a(k), b(k));
}

TEST(Persistence, TruncatedFileNamesMissingSection) {
  const std::string text = model_to_string(mixed_fit().second.model);
  const auto cut = text.find("\"latent\": ");
  ASSERT_NE(cut, std::string::npos);
  try {
    model_from_string(text.substr(0, cut + 40));
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("latent"), std::string::npos) << e.what();
  }
}

TEST(Persistence, MissingSectionAndVersionErrors) {
  auto j = model_to_json(mixed_fit().second.model);
  auto no_clusters = j;
  no_clusters.erase("clusters");
  try {
    model_from_json(no_clusters);
    FAIL() << "expected a schema error";
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("clusters"), std::string::npos) << e.what();
  }
  auto future = j;
  future["meta"]["version"] = kModelFormatVersion + 1;
  EXPECT_THROW(model_from_json(future), VersionError);
}

TEST(Pipeline, PureMainEffectDataLeavesLittleForLatentStage) {
  const Toy t = make_toy(80, 80, {"x1", "x2"}, {"z1"}, 0.5, [](const auto& x, const auto&, int, int) { return 5.0 * x(0); },
                         0.1, 41);
  const auto r = fit(FitInput{t.users, t.items, t.split}, small_config(400));
  const auto ir = importance_ratios(r.model, t.users, t.items, t.split.train.triples);
  EXPECT_LT(ir.ratio("latent"), 0.05);
  const Eigen::VectorXd s = predict_triples(r.model, t.users, t.items, t.split.validation.triples);
  const double rmse = std::sqrt((s - t.split.validation.responses()).squaredNorm() / static_cast<double>(s.size()));
  EXPECT_LT(rmse, 0.2);
}

TEST(Pipeline, PureLatentDataIsCapturedByLatentStage) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd u(80, 3), v(70, 3);
  for (auto* m : {&u, &v})
    for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = g(rng);
  const Toy t = make_toy(80, 70, {"x1", "x2"}, {"z1", "z2"}, 0.5,
                         [&](const auto&, const auto&, int i, int j) { return u.row(i).dot(v.row(j)); }, 0.0, 42);
  FitConfig c = small_config(200);
  c.rank = 3;
  c.lambda = 0.0;
  const auto r = fit(FitInput{t.users, t.items, t.split}, c);
  const auto ir = importance_ratios(r.model, t.users, t.items, t.split.train.triples);
  double additive = 0.0;
  for (const auto& e : ir.effects)
    if (e.kind != EffectKind::kLatent) additive += e.ratio;
  EXPECT_LT(additive, 0.10);
  EXPECT_GT(ir.ratio("latent"), 0.5);
}

}  // namespace
}  // namespace gammli
