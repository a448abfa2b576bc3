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

#ifndef GAMMLI_MODEL_HPP_
#define GAMMLI_MODEL_HPP_

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gammli/additive.hpp"
#include "gammli/data.hpp"
#include "gammli/error.hpp"
#include "gammli/kmeans.hpp"
#include "gammli/latent.hpp"
#include "gammli/random.hpp"
#include "gammli/subnet.hpp"

namespace gammli {

struct FitConfig {
  TrainConfig train;
  int user_groups = 10;
  int item_groups = 10;
  double lambda = 1.0;
  int rank = 3;
  int latent_max_iterations = 100;
  double latent_tolerance = 1e-4;
  KMeansOptions kmeans;

  void validate() const {
    train.validate();
    if (user_groups < 1 || item_groups < 1) throw ValidationError("group counts must be at least 1");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be a finite non-negative number");
    if (rank < 1) throw ValidationError("rank must be at least 1");
    if (latent_max_iterations < 1) throw ValidationError("latent_max_iterations must be positive");
    if (!(latent_tolerance >= 0.0)) throw ValidationError("latent_tolerance must be non-negative");
  }
};

// Raw (unscaled) features of every entity referenced by the split.
struct FitInput {
  FeatureTable users;
  FeatureTable items;
  DataSplit split;
};

struct GammliModel {
  Task task = Task::kRegression;
  FitConfig config;
  ScalingParams user_scaling;
  ScalingParams item_scaling;
  FeatureTable users;  // entities seen in training, scaled features
  FeatureTable items;
  Clustering user_clusters;  // over `users` rows, centroids in scaled feature space
  Clustering item_clusters;
  std::vector<int> user_observations;  // training observations per `users` row
  std::vector<int> item_observations;
  MainEffectsModel main;
  ManifestModel manifest;
  LatentFactors latent;  // rows follow `users` / `items`
};

inline double task_loss(Task task, const Eigen::VectorXd& score, const Eigen::VectorXd& y) {
  return detail::mean_task_loss(loss_for(task), score, y);
}

// Residual handed to the next stage; see stage_residual.
inline Eigen::VectorXd residuals(const Eigen::VectorXd& y, const Eigen::VectorXd& partial, Task task) {
  if (y.size() != partial.size()) throw ValidationError("residuals: length mismatch");
  Eigen::VectorXd r(y.size());
  for (Eigen::Index k = 0; k < y.size(); ++k) r(k) = stage_residual(task, y(k), partial(k));
  return r;
}

// ---------------------------------------------------------------------------
// Entity resolution and scoring.

// One side of a prediction: scaled features, latent row and cluster.
struct EntityState {
  std::string id;
  Eigen::RowVectorXd features;
  Eigen::RowVectorXd latent;
  int group = 0;
  bool cold = false;
};

namespace detail {

inline const FeatureTable& side_table(const GammliModel& m, Side s) { return s == Side::kUser ? m.users : m.items; }
inline const ScalingParams& side_scaling(const GammliModel& m, Side s) {
  return s == Side::kUser ? m.user_scaling : m.item_scaling;
}
inline const Clustering& side_clusters(const GammliModel& m, Side s) {
  return s == Side::kUser ? m.user_clusters : m.item_clusters;
}
inline const Eigen::MatrixXd& side_factors(const GammliModel& m, Side s) { return s == Side::kUser ? m.latent.u : m.latent.v; }
inline const Eigen::MatrixXd& side_centroids(const GammliModel& m, Side s) {
  return s == Side::kUser ? m.latent.user_centroids : m.latent.item_centroids;
}

// Reorders the columns of row `r` of `raw` into `layout`'s column order.
// Numeric columns must be present; absent one-hot levels read as 0.
inline Eigen::RowVectorXd align_row(const FeatureTable& layout, const FeatureTable& raw, int r) {
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(layout.cols());
  for (int c = 0; c < layout.cols(); ++c) {
    const Column& col = layout.columns()[static_cast<std::size_t>(c)];
    int found = -1;
    for (int k = 0; k < raw.cols(); ++k) {
      if (raw.columns()[static_cast<std::size_t>(k)].name == col.name) {
        found = k;
        break;
      }
    }
    if (found < 0) {
      if (col.kind == ColumnKind::kNumeric) throw ValidationError("feature column '" + col.name + "' is missing");
      continue;
    }
    out(c) = raw.values()(r, found);
  }
  return out;
}

}  // namespace detail

// Row `r` of a raw feature table in the model's column layout for `side`.
inline Eigen::RowVectorXd model_row(const GammliModel& model, Side side, const FeatureTable& raw, int r) {
  return detail::align_row(detail::side_table(model, side), raw, r);
}

// Entity from raw features laid out like the model's columns: scaled with
// the stored ranges (clamped), assigned to the nearest feature cluster, latent
// row set to that cluster's centroid.
inline EntityState cold_entity(const GammliModel& model, Side side, const Eigen::RowVectorXd& raw, std::string id = {}) {
  const FeatureTable& layout = detail::side_table(model, side);
  if (raw.size() != layout.cols()) {
    throw ValidationError(std::string(to_string(side)) + " features have " + std::to_string(raw.size()) +
                          " values, expected " + std::to_string(layout.cols()));
  }
  EntityState e;
  e.id = std::move(id);
  e.cold = true;
  e.features = detail::side_scaling(model, side).transform_row(layout, raw);
  e.group = assign_cluster(e.features, detail::side_clusters(model, side));
  e.latent = detail::side_centroids(model, side).row(e.group);
  return e;
}

inline EntityState warm_entity(const GammliModel& model, Side side, int row) {
  const FeatureTable& t = detail::side_table(model, side);
  EntityState e;
  e.id = t.ids()[static_cast<std::size_t>(row)];
  e.features = t.values().row(row);
  e.latent = detail::side_factors(model, side).row(row);
  e.group = detail::side_clusters(model, side).assignments[static_cast<std::size_t>(row)];
  return e;
}

// Warm if `id` was seen in training; otherwise cold, reading raw features
// for `id` from `raw` (which must then be provided and contain it).
inline EntityState resolve_entity(const GammliModel& model, Side side, const std::string& id, const FeatureTable* raw) {
  if (const auto row = detail::side_table(model, side).find(id)) return warm_entity(model, side, *row);
  const std::string what(to_string(side));
  if (raw == nullptr) throw ValidationError(what + " '" + id + "' is new; its features are required");
  const auto r = raw->find(id);
  if (!r) throw ValidationError(what + " '" + id + "' is new and has no feature row");
  return cold_entity(model, side, detail::align_row(detail::side_table(model, side), *raw, *r), id);
}

// Link-scale contributions of every term for a list of (user, item) pairs
// given by indices into `users` / `items`. Columns: intercept, retained main
// effects, retained pair effects, latent. `score` sums each row left to right.
struct ScoreMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd parts;
  Eigen::VectorXd score;
};

inline ScoreMatrix score_pairs(const GammliModel& model, const std::vector<EntityState>& users,
                               const std::vector<EntityState>& items, const std::vector<std::pair<int, int>>& pairs) {
  ScoreMatrix out;
  const auto n = static_cast<Eigen::Index>(pairs.size());
  std::vector<Eigen::VectorXd> cols;

  out.names.push_back("intercept");
  cols.push_back(Eigen::VectorXd::Constant(n, model.main.intercept));

  for (const auto& e : model.main.effects) {
    if (!e.retained) continue;
    const bool user_side = e.side == Side::kUser;
    const auto& entities = user_side ? users : items;
    const Feature& f = detail::side_table(model, e.side).features()[static_cast<std::size_t>(e.feature)];
    std::vector<double> per_entity(entities.size());
    for (std::size_t k = 0; k < entities.size(); ++k) per_entity[k] = e(f, entities[k].features);
    Eigen::VectorXd c(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& pr = pairs[static_cast<std::size_t>(k)];
      c(k) = per_entity[static_cast<std::size_t>(user_side ? pr.first : pr.second)];
    }
    out.names.push_back(e.name);
    cols.push_back(std::move(c));
  }

  for (const auto& p : model.manifest.pairs) {
    if (!p.retained) continue;
    const Feature& fu = model.users.features()[static_cast<std::size_t>(p.user_feature)];
    const Feature& fi = model.items.features()[static_cast<std::size_t>(p.item_feature)];
    TermInputs in;
    in.values.resize(2, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const auto& pr = pairs[static_cast<std::size_t>(k)];
      in.values(0, k) = feature_value(fu, users[static_cast<std::size_t>(pr.first)].features);
      in.values(1, k) = feature_value(fi, items[static_cast<std::size_t>(pr.second)].features);
    }
    out.names.push_back(p.name);
    cols.push_back(detail::evaluate(p.net, in));
  }

  out.names.push_back("latent");
  Eigen::VectorXd lat(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& pr = pairs[static_cast<std::size_t>(k)];
    lat(k) = users[static_cast<std::size_t>(pr.first)].latent.dot(items[static_cast<std::size_t>(pr.second)].latent);
  }
  cols.push_back(std::move(lat));

  out.parts.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.parts.col(static_cast<Eigen::Index>(c)) = cols[c];
  out.score.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < out.parts.cols(); ++c) s += out.parts(k, c);
    out.score(k) = s;
  }
  return out;
}

struct Contribution {
  std::string name;
  double value = 0.0;
};

struct PredictionResult {
  std::string user_id;
  std::string item_id;
  double score = 0.0;  // link scale
  double value = 0.0;  // response scale: the score, or P(y = 1)
  std::vector<Contribution> terms;  // in model order; they sum to score
  bool cold_user = false;
  bool cold_item = false;
  int user_group = 0;
  int item_group = 0;
};

inline PredictionResult predict_entities(const GammliModel& model, const EntityState& user, const EntityState& item) {
  const ScoreMatrix s = score_pairs(model, {user}, {item}, {{0, 0}});
  PredictionResult r;
  r.user_id = user.id;
  r.item_id = item.id;
  r.score = s.score(0);
  r.value = inverse_link(model.task, r.score);
  for (std::size_t c = 0; c < s.names.size(); ++c) r.terms.push_back({s.names[c], s.parts(0, static_cast<Eigen::Index>(c))});
  r.cold_user = user.cold;
  r.cold_item = item.cold;
  r.user_group = user.group;
  r.item_group = item.group;
  return r;
}

// Scores one pair by id. Ids unseen in training take the cold-start path and
// need a row in the matching raw feature table.
inline PredictionResult predict(const GammliModel& model, const std::string& user_id, const std::string& item_id,
                                const FeatureTable* user_features = nullptr, const FeatureTable* item_features = nullptr) {
  return predict_entities(model, resolve_entity(model, Side::kUser, user_id, user_features),
                          resolve_entity(model, Side::kItem, item_id, item_features));
}

// Cold-start prediction from raw feature rows (model column order). A side
// given as an id instead must be a training entity.
inline PredictionResult predict_cold(const GammliModel& model, const std::optional<Eigen::RowVectorXd>& user_features,
                                     const std::optional<Eigen::RowVectorXd>& item_features,
                                     const std::string& user_id = {}, const std::string& item_id = {}) {
  auto side = [&](Side s, const std::optional<Eigen::RowVectorXd>& raw, const std::string& id) {
    if (raw) return cold_entity(model, s, *raw, id);
    return resolve_entity(model, s, id, nullptr);
  };
  return predict_entities(model, side(Side::kUser, user_features, user_id), side(Side::kItem, item_features, item_id));
}

// Link-scale scores for observation triples whose indices refer to the rows
// of the raw feature tables `users` / `items`.
inline Eigen::VectorXd predict_triples(const GammliModel& model, const FeatureTable& users, const FeatureTable& items,
                                       const std::vector<Triple>& triples) {
  std::vector<EntityState> us, is;
  std::vector<int> uslot(static_cast<std::size_t>(users.rows()), -1), islot(static_cast<std::size_t>(items.rows()), -1);
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(triples.size());
  for (const auto& t : triples) {
    int& a = uslot.at(static_cast<std::size_t>(t.user));
    if (a < 0) {
      a = static_cast<int>(us.size());
      us.push_back(resolve_entity(model, Side::kUser, users.ids()[static_cast<std::size_t>(t.user)], &users));
    }
    int& b = islot.at(static_cast<std::size_t>(t.item));
    if (b < 0) {
      b = static_cast<int>(is.size());
      is.push_back(resolve_entity(model, Side::kItem, items.ids()[static_cast<std::size_t>(t.item)], &items));
    }
    pairs.emplace_back(a, b);
  }
  return score_pairs(model, us, is, pairs).score;
}

// ---------------------------------------------------------------------------
// Fitting.

// Result of stages 1 and 2, reusable across latent-stage settings.
struct AdditiveFit {
  Task task = Task::kRegression;
  FitConfig config;
  FitInput input;
  ScalingParams user_scaling;
  ScalingParams item_scaling;
  FeatureTable users;  // every input row, scaled with the training ranges
  FeatureTable items;
  std::vector<int> warm_users;  // input rows with training observations
  std::vector<int> warm_items;
  std::vector<int> user_slot;  // input row -> position in warm_users, or -1
  std::vector<int> item_slot;
  MainEffectsModel main;
  ManifestModel manifest;
  TrainTrace fine_tune_trace;
  Eigen::VectorXd train_scores;       // stage 1 + 2 link scores
  Eigen::VectorXd validation_scores;
  ResidualMatrix residuals;  // over warm users x warm items
  double stage1_validation_loss = 0.0;
  double stage2_validation_loss = 0.0;
};

struct FitResult {
  GammliModel model;
  TrainTrace stage1_trace;
  TrainTrace stage2_trace;
  TrainTrace fine_tune_trace;
  std::vector<double> latent_objective;
  std::vector<double> latent_rmse;
  // Global validation loss after stage 1, after stage 2 (with fine-tuning)
  // and after the latent stage.
  double stage1_validation_loss = 0.0;
  double stage2_validation_loss = 0.0;
  double latent_validation_loss = 0.0;
};

namespace detail {

inline std::string stage_error(const std::string& stage, const std::exception& e) {
  return stage + ": " + e.what();
}

template <class F>
auto run_stage(const std::string& stage, F&& f) {
  try {
    return f();
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    throw TrainingError(stage_error(stage, e));
  }
}

inline void mark_warm(const std::vector<Triple>& triples, int m, int n, std::vector<int>& warm_u, std::vector<int>& warm_i,
                      std::vector<int>& slot_u, std::vector<int>& slot_i) {
  std::vector<char> su(static_cast<std::size_t>(m), 0), si(static_cast<std::size_t>(n), 0);
  for (const auto& t : triples) {
    su[static_cast<std::size_t>(t.user)] = 1;
    si[static_cast<std::size_t>(t.item)] = 1;
  }
  slot_u.assign(static_cast<std::size_t>(m), -1);
  slot_i.assign(static_cast<std::size_t>(n), -1);
  warm_u.clear();
  warm_i.clear();
  for (int i = 0; i < m; ++i) {
    if (su[static_cast<std::size_t>(i)]) {
      slot_u[static_cast<std::size_t>(i)] = static_cast<int>(warm_u.size());
      warm_u.push_back(i);
    }
  }
  for (int j = 0; j < n; ++j) {
    if (si[static_cast<std::size_t>(j)]) {
      slot_i[static_cast<std::size_t>(j)] = static_cast<int>(warm_i.size());
      warm_i.push_back(j);
    }
  }
}

inline void check_input(const FitInput& in) {
  const auto& s = in.split;
  for (const ObservationSet* o : {&s.train, &s.validation, &s.test}) {
    if (o->m != in.users.rows() || o->n != in.items.rows()) {
      throw ValidationError("observation index space does not match the feature tables");
    }
    o->validate();
  }
  if (s.train.empty()) throw ValidationError("the training split is empty");
  if (s.validation.empty()) throw ValidationError("the validation split is empty");
  for (const auto& fu : in.users.features()) {
    for (const auto& fi : in.items.features()) {
      if (fu.name == fi.name) throw ValidationError("feature name '" + fu.name + "' is used by both users and items");
    }
  }
}

}  // namespace detail

// Stages 1 and 2: scaling, main effects, pair effects, joint fine-tuning and
// the residual matrix for the latent stage.
inline AdditiveFit fit_additive(FitInput input, const FitConfig& config) {
  config.validate();
  detail::check_input(input);
  AdditiveFit a;
  a.task = input.split.train.task;
  a.config = config;
  const auto& split = input.split;
  detail::mark_warm(split.train.triples, input.users.rows(), input.items.rows(), a.warm_users, a.warm_items,
                    a.user_slot, a.item_slot);

  a.user_scaling = scale_features(input.users.subset(a.warm_users)).second;
  a.item_scaling = scale_features(input.items.subset(a.warm_items)).second;
  a.users = a.user_scaling.transform(input.users);
  a.items = a.item_scaling.transform(input.items);

  const Eigen::VectorXd y = split.train.responses();
  const Eigen::VectorXd yv = split.validation.responses();

  a.main = detail::run_stage("stage 1 (main effects)",
                             [&] { return fit_main_effects(split, a.users, a.items, config.train, a.task); });
  const Eigen::VectorXd f1 = main_effect_scores(a.main, split.train.triples, a.users, a.items);
  a.stage1_validation_loss = task_loss(a.task, main_effect_scores(a.main, split.validation.triples, a.users, a.items), yv);

  const Eigen::VectorXd r1 = residuals(y, f1, a.task);
  a.manifest = detail::run_stage("stage 2 (manifest interactions)", [&] {
    return fit_manifest_interactions(r1, split, a.users, a.items, config.train, a.task, a.main);
  });
  a.fine_tune_trace = detail::run_stage("stage 2 (fine-tuning)", [&] {
    return fine_tune(a.main, a.manifest, split, a.users, a.items, config.train, a.task);
  });

  a.train_scores = main_effect_scores(a.main, split.train.triples, a.users, a.items) +
                   manifest_scores(a.manifest, split.train.triples, a.users, a.items);
  a.validation_scores = main_effect_scores(a.main, split.validation.triples, a.users, a.items) +
                        manifest_scores(a.manifest, split.validation.triples, a.users, a.items);
  a.stage2_validation_loss = task_loss(a.task, a.validation_scores, yv);

  const Eigen::VectorXd r2 = residuals(y, a.train_scores, a.task);
  a.residuals = ResidualMatrix{static_cast<int>(a.warm_users.size()), static_cast<int>(a.warm_items.size()), {}};
  a.residuals.entries.reserve(split.train.size());
  for (std::size_t k = 0; k < split.train.size(); ++k) {
    const auto& t = split.train.triples[k];
    a.residuals.entries.push_back({a.user_slot[static_cast<std::size_t>(t.user)],
                                   a.item_slot[static_cast<std::size_t>(t.item)], r2(static_cast<Eigen::Index>(k))});
  }
  a.input = std::move(input);
  return a;
}

inline Clustering cluster_side(const AdditiveFit& a, Side side, int k) {
  const bool user = side == Side::kUser;
  const FeatureTable warm = (user ? a.users : a.items).subset(user ? a.warm_users : a.warm_items);
  const auto seed = derive_seed(a.config.train.seed, user ? "kmeans/users" : "kmeans/items");
  return detail::run_stage(std::string("grouping (") + (user ? "users" : "items") + ")",
                           [&] { return kmeans(warm.values(), k, seed, a.config.kmeans); });
}

// Latent stage on top of a stage 1-2 fit. Clusterings may be supplied (they
// must have been computed by cluster_side for the same group counts).
inline GammliModel fit_latent_stage(const AdditiveFit& a, int user_groups, int item_groups, double lambda,
                                    const Clustering* user_clusters = nullptr, const Clustering* item_clusters = nullptr) {
  GammliModel model;
  model.task = a.task;
  model.config = a.config;
  model.config.user_groups = user_groups;
  model.config.item_groups = item_groups;
  model.config.lambda = lambda;
  model.config.validate();
  model.user_scaling = a.user_scaling;
  model.item_scaling = a.item_scaling;
  model.users = a.users.subset(a.warm_users);
  model.items = a.items.subset(a.warm_items);
  model.user_clusters = user_clusters ? *user_clusters : cluster_side(a, Side::kUser, user_groups);
  model.item_clusters = item_clusters ? *item_clusters : cluster_side(a, Side::kItem, item_groups);
  model.main = a.main;
  model.manifest = a.manifest;
  model.user_observations.assign(a.warm_users.size(), 0);
  model.item_observations.assign(a.warm_items.size(), 0);
  for (const auto& e : a.residuals.entries) {
    ++model.user_observations[static_cast<std::size_t>(e.row)];
    ++model.item_observations[static_cast<std::size_t>(e.col)];
  }

  LatentOptions opt;
  opt.rank = a.config.rank;
  opt.lambda = lambda;
  opt.seed = derive_seed(a.config.train.seed, "latent");
  opt.max_iterations = a.config.latent_max_iterations;
  opt.tolerance = a.config.latent_tolerance;
  model.latent = detail::run_stage("latent interactions",
                                   [&] { return fit_latent(a.residuals, model.user_clusters, model.item_clusters, opt); });
  return model;
}

// Latent-term values for the validation triples of `a` under `model`.
inline Eigen::VectorXd validation_latent(const AdditiveFit& a, const GammliModel& model) {
  const auto& triples = a.input.split.validation.triples;
  auto row = [&](Side side, int entity) -> Eigen::RowVectorXd {
    const bool user = side == Side::kUser;
    const int slot = (user ? a.user_slot : a.item_slot)[static_cast<std::size_t>(entity)];
    if (slot >= 0) return detail::side_factors(model, side).row(slot);
    const FeatureTable& scaled = user ? a.users : a.items;
    const int g = assign_cluster(scaled.values().row(entity), detail::side_clusters(model, side));
    return detail::side_centroids(model, side).row(g);
  };
  Eigen::VectorXd out(static_cast<Eigen::Index>(triples.size()));
  for (std::size_t k = 0; k < triples.size(); ++k) {
    out(static_cast<Eigen::Index>(k)) = row(Side::kUser, triples[k].user).dot(row(Side::kItem, triples[k].item));
  }
  return out;
}

inline double latent_validation_loss(const AdditiveFit& a, const GammliModel& model) {
  return task_loss(a.task, a.validation_scores + validation_latent(a, model), a.input.split.validation.responses());
}

// Latent stage with the given hyperparameters, packaged with the traces of
// the stage 1-2 fit it builds on.
inline FitResult complete_fit(const AdditiveFit& a, int user_groups, int item_groups, double lambda) {
  FitResult r;
  r.model = fit_latent_stage(a, user_groups, item_groups, lambda);
  r.stage1_trace = a.main.trace;
  r.stage2_trace = a.manifest.trace;
  r.fine_tune_trace = a.fine_tune_trace;
  r.latent_objective = r.model.latent.objective;
  r.latent_rmse = r.model.latent.rmse;
  r.stage1_validation_loss = a.stage1_validation_loss;
  r.stage2_validation_loss = a.stage2_validation_loss;
  r.latent_validation_loss = latent_validation_loss(a, r.model);
  return r;
}

// Full training: stage 1, stage 2, grouping, latent stage.
inline FitResult fit(FitInput input, const FitConfig& config) {
  const AdditiveFit a = fit_additive(std::move(input), config);
  return complete_fit(a, config.user_groups, config.item_groups, config.lambda);
}

}  // namespace gammli

#endif  // GAMMLI_MODEL_HPP_
