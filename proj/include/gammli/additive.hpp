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

#ifndef GAMMLI_ADDITIVE_HPP_
#define GAMMLI_ADDITIVE_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gammli/data.hpp"
#include "gammli/error.hpp"
#include "gammli/random.hpp"
#include "gammli/subnet.hpp"

namespace gammli {

enum class Side { kUser, kItem };

inline std::string_view to_string(Side s) { return s == Side::kUser ? "user" : "item"; }

// Index of the active one-hot level of a categorical feature, or -1.
inline int feature_level(const Feature& f, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  for (std::size_t k = 0; k < f.columns.size(); ++k) {
    if (row(f.columns[k]) > 0.5) return static_cast<int>(k);
  }
  return -1;
}

// Scalar subnet input of a feature: the scaled value for numeric features and
// level / (levels - 1) for categorical ones.
inline double feature_value(const Feature& f, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  if (f.kind == ColumnKind::kNumeric) return row(f.columns.front());
  const int level = feature_level(f, row);
  const auto count = static_cast<int>(f.columns.size());
  return (count > 1 && level >= 0) ? static_cast<double>(level) / static_cast<double>(count - 1) : 0.0;
}

// Link-scale intercept matching a response mean: the mean itself for
// regression, half the log-odds of the base rate for classification.
inline double link_of_mean(Task task, double mean) {
  if (task == Task::kRegression) return mean;
  const double p = std::clamp(mean, 1e-12, 1.0 - 1e-12);
  return 0.5 * std::log(p / (1.0 - p));
}

inline double inverse_link(Task task, double score) {
  if (task == Task::kRegression) return score;
  return 1.0 / (1.0 + std::exp(-2.0 * score));
}

// Stage residual: y - F for regression; for classification the negative
// logistic-loss gradient 2y'/(1 + exp(2y'F)) with y' = 2y - 1.
inline double stage_residual(Task task, double y, double score) {
  if (task == Task::kRegression) return y - score;
  const double s = 2.0 * y - 1.0;
  return 2.0 * s / (1.0 + std::exp(2.0 * s * score));
}

// Sample variance about zero, sum(v^2) / (N - 1).
inline double effect_variation(const Eigen::VectorXd& values) {
  const auto n = values.size();
  if (n == 0) return 0.0;
  return values.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(1, n - 1));
}

// ---------------------------------------------------------------------------

struct MainEffect {
  std::string name;
  Side side = Side::kUser;
  int feature = 0;  // index into FeatureTable::features() of its side
  EffectFunction fn;
  double variation = 0.0;
  bool retained = false;

  double operator()(const Feature& f, const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    if (const auto* net = std::get_if<Subnet>(&fn)) return (*net)(feature_value(f, row));
    return std::get<CategoricalEffect>(fn)(feature_level(f, row));
  }
};

struct PairEffect {
  std::string name;
  int user_feature = 0;
  int item_feature = 0;
  Subnet net{2};
  double variation = 0.0;
  bool retained = false;
};

struct MainEffectsModel {
  double intercept = 0.0;
  std::vector<MainEffect> effects;  // descending variation; retained ones first
  TrainTrace trace;
  std::vector<double> pruning_losses;  // validation loss of the top-s model, s = 0..count

  int retained_count() const {
    return static_cast<int>(std::count_if(effects.begin(), effects.end(), [](const auto& e) { return e.retained; }));
  }
  const MainEffect* find(std::string_view name) const {
    for (const auto& e : effects) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }
};

struct ManifestModel {
  std::vector<PairEffect> pairs;  // descending variation; retained ones first
  TrainTrace trace;
  std::vector<double> pruning_losses;

  int retained_count() const {
    return static_cast<int>(std::count_if(pairs.begin(), pairs.end(), [](const auto& p) { return p.retained; }));
  }
  const PairEffect* find(std::string_view name) const {
    for (const auto& p : pairs) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }
};

inline std::string pair_name(const std::string& user_feature, const std::string& item_feature) {
  return user_feature + "__" + item_feature;
}

// ---------------------------------------------------------------------------
// Design matrices over observation lists.

namespace detail {

inline TermInputs main_inputs(const MainEffect& e, const std::vector<Triple>& obs, const FeatureTable& users,
                              const FeatureTable& items) {
  const FeatureTable& table = e.side == Side::kUser ? users : items;
  const Feature& f = table.features()[static_cast<std::size_t>(e.feature)];
  TermInputs in;
  const auto n = static_cast<Eigen::Index>(obs.size());
  const bool categorical = std::holds_alternative<CategoricalEffect>(e.fn);
  if (categorical) {
    in.levels.resize(obs.size());
  } else {
    in.values.resize(1, n);
  }
  // Each entity's input is computed once and then gathered.
  std::vector<double> value(static_cast<std::size_t>(table.rows()));
  std::vector<int> level(static_cast<std::size_t>(table.rows()));
  for (int r = 0; r < table.rows(); ++r) {
    const auto row = table.values().row(r);
    if (categorical) {
      level[static_cast<std::size_t>(r)] = feature_level(f, row);
    } else {
      value[static_cast<std::size_t>(r)] = feature_value(f, row);
    }
  }
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const auto entity = static_cast<std::size_t>(e.side == Side::kUser ? obs[k].user : obs[k].item);
    if (categorical) {
      in.levels[k] = level[entity];
    } else {
      in.values(0, static_cast<Eigen::Index>(k)) = value[entity];
    }
  }
  return in;
}

inline TermInputs pair_inputs(const PairEffect& p, const std::vector<Triple>& obs, const FeatureTable& users,
                              const FeatureTable& items) {
  const Feature& fu = users.features()[static_cast<std::size_t>(p.user_feature)];
  const Feature& fi = items.features()[static_cast<std::size_t>(p.item_feature)];
  std::vector<double> uv(static_cast<std::size_t>(users.rows()));
  std::vector<double> iv(static_cast<std::size_t>(items.rows()));
  for (int r = 0; r < users.rows(); ++r) uv[static_cast<std::size_t>(r)] = feature_value(fu, users.values().row(r));
  for (int r = 0; r < items.rows(); ++r) iv[static_cast<std::size_t>(r)] = feature_value(fi, items.values().row(r));
  TermInputs in;
  in.values.resize(2, static_cast<Eigen::Index>(obs.size()));
  for (std::size_t k = 0; k < obs.size(); ++k) {
    in.values(0, static_cast<Eigen::Index>(k)) = uv[static_cast<std::size_t>(obs[k].user)];
    in.values(1, static_cast<Eigen::Index>(k)) = iv[static_cast<std::size_t>(obs[k].item)];
  }
  return in;
}

inline Eigen::VectorXd evaluate(const EffectFunction& fn, const TermInputs& in) {
  const std::size_t n = std::holds_alternative<Subnet>(fn) ? static_cast<std::size_t>(in.values.cols()) : in.levels.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  EffectFunction* terms[] = {const_cast<EffectFunction*>(&fn)};
  return additive_scores(terms, 0.0, {in}, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)), idx);
}

// Shifts an effect so its values average to zero; returns the removed mean.
inline double center(EffectFunction& fn, const TermInputs& in) {
  const Eigen::VectorXd v = evaluate(fn, in);
  if (v.size() == 0) return 0.0;
  const double c = v.mean();
  if (auto* net = std::get_if<Subnet>(&fn)) {
    net->set_output_offset(net->output_offset() - c);
  } else {
    std::get<CategoricalEffect>(fn).offsets.array() -= c;
  }
  return c;
}

inline double mean_task_loss(Loss loss, const Eigen::VectorXd& score, const Eigen::VectorXd& y) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < y.size(); ++k) total += loss_value(loss, score(k), y(k));
  return y.size() == 0 ? 0.0 : total / static_cast<double>(y.size());
}

template <class T>
std::vector<std::size_t> order_by_variation(const std::vector<T>& effects) {
  std::vector<std::size_t> order(effects.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return effects[a].variation > effects[b].variation; });
  return order;
}

template <class T>
std::vector<T> permute(std::vector<T> v, const std::vector<std::size_t>& order) {
  std::vector<T> out;
  out.reserve(v.size());
  for (std::size_t k : order) out.push_back(std::move(v[k]));
  return out;
}

}  // namespace detail

// Picks how many of the given effects (already sorted by descending
// variation) to keep: the smallest s whose cumulative model base + top-s
// contributions has the lowest validation loss. Also returns the loss curve.
inline int prune_by_validation(const Eigen::VectorXd& base, const std::vector<Eigen::VectorXd>& contributions,
                               const Eigen::VectorXd& targets, Loss loss, std::vector<double>* curve = nullptr) {
  Eigen::VectorXd score = base;
  double best = detail::mean_task_loss(loss, score, targets);
  int best_s = 0;
  if (curve) curve->assign(1, best);
  for (std::size_t s = 0; s < contributions.size(); ++s) {
    score += contributions[s];
    const double l = detail::mean_task_loss(loss, score, targets);
    if (curve) curve->push_back(l);
    if (l < best) {
      best = l;
      best_s = static_cast<int>(s) + 1;
    }
  }
  return best_s;
}

// ---------------------------------------------------------------------------
// Stage 1.

inline Eigen::VectorXd main_effect_scores(const MainEffectsModel& model, const std::vector<Triple>& obs,
                                          const FeatureTable& users, const FeatureTable& items) {
  Eigen::VectorXd score = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(obs.size()), model.intercept);
  for (const auto& e : model.effects) {
    if (e.retained) score += detail::evaluate(e.fn, detail::main_inputs(e, obs, users, items));
  }
  return score;
}

inline MainEffectsModel fit_main_effects(const DataSplit& split, const FeatureTable& users, const FeatureTable& items,
                                         const TrainConfig& config, Task task, int max_epochs = -1) {
  config.validate();
  if (split.train.empty()) throw ValidationError("main effects need a non-empty training set");
  MainEffectsModel model;
  const Eigen::VectorXd y = split.train.responses();
  model.intercept = link_of_mean(task, y.mean());

  for (Side side : {Side::kUser, Side::kItem}) {
    const FeatureTable& table = side == Side::kUser ? users : items;
    for (std::size_t f = 0; f < table.features().size(); ++f) {
      const Feature& feat = table.features()[f];
      MainEffect e;
      e.name = feat.name;
      e.side = side;
      e.feature = static_cast<int>(f);
      if (feat.kind == ColumnKind::kCategorical) {
        e.fn = CategoricalEffect(static_cast<int>(feat.columns.size()));
      } else {
        Rng rng = make_rng(config.seed, "main/" + std::string(to_string(side)) + "/" + feat.name);
        e.fn = Subnet::glorot(1, rng);
      }
      model.effects.push_back(std::move(e));
    }
  }

  std::vector<TermInputs> design;
  std::vector<EffectFunction*> terms;
  for (auto& e : model.effects) {
    design.push_back(detail::main_inputs(e, split.train.triples, users, items));
    terms.push_back(&e.fn);
  }
  TrainConfig stage = config;
  stage.seed = derive_seed(config.seed, "stage1");
  model.trace = train_additive(terms, &model.intercept, design, Eigen::VectorXd::Zero(y.size()), y, stage,
                               loss_for(task), max_epochs < 0 ? config.max_epochs : max_epochs);

  for (std::size_t t = 0; t < model.effects.size(); ++t) {
    model.intercept += detail::center(model.effects[t].fn, design[t]);
    model.effects[t].variation = effect_variation(detail::evaluate(model.effects[t].fn, design[t]));
  }
  model.effects = detail::permute(std::move(model.effects), detail::order_by_variation(model.effects));

  const Eigen::VectorXd yv = split.validation.responses();
  std::vector<Eigen::VectorXd> contrib;
  for (const auto& e : model.effects) {
    contrib.push_back(detail::evaluate(e.fn, detail::main_inputs(e, split.validation.triples, users, items)));
  }
  const int keep = prune_by_validation(Eigen::VectorXd::Constant(yv.size(), model.intercept), contrib, yv,
                                       loss_for(task), &model.pruning_losses);
  for (int s = 0; s < keep; ++s) model.effects[static_cast<std::size_t>(s)].retained = true;
  return model;
}

// ---------------------------------------------------------------------------
// Stage 2.

inline constexpr int kMaxManifestPairs = 200;

// Candidate (user feature, item feature) pairs. When there are more than
// `cap`, the pairs with the largest product of stage-1 variations are kept,
// in declaration order otherwise.
inline std::vector<std::pair<int, int>> candidate_pairs(const FeatureTable& users, const FeatureTable& items,
                                                        const MainEffectsModel* main, int cap = kMaxManifestPairs) {
  std::vector<std::pair<int, int>> pairs;
  const auto p = static_cast<int>(users.features().size());
  const auto q = static_cast<int>(items.features().size());
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < q; ++b) pairs.emplace_back(a, b);
  if (static_cast<int>(pairs.size()) <= cap) return pairs;
  std::vector<double> du(static_cast<std::size_t>(p), 0.0), di(static_cast<std::size_t>(q), 0.0);
  if (main) {
    for (const auto& e : main->effects) (e.side == Side::kUser ? du : di)[static_cast<std::size_t>(e.feature)] = e.variation;
  }
  std::stable_sort(pairs.begin(), pairs.end(), [&](const auto& x, const auto& y) {
    return du[static_cast<std::size_t>(x.first)] * di[static_cast<std::size_t>(x.second)] >
           du[static_cast<std::size_t>(y.first)] * di[static_cast<std::size_t>(y.second)];
  });
  pairs.resize(static_cast<std::size_t>(cap));
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

inline Eigen::VectorXd manifest_scores(const ManifestModel& model, const std::vector<Triple>& obs,
                                       const FeatureTable& users, const FeatureTable& items) {
  Eigen::VectorXd score = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(obs.size()));
  for (const auto& p : model.pairs) {
    if (p.retained) score += detail::evaluate(p.net, detail::pair_inputs(p, obs, users, items));
  }
  return score;
}

// Fits all user-item pair effects jointly to `residuals` (aligned with the
// training triples) by squared loss. Centering shifts are folded into
// main.intercept; pruning compares the task loss of the full stage-2 score
// on the validation split.
inline ManifestModel fit_manifest_interactions(const Eigen::VectorXd& residuals, const DataSplit& split,
                                               const FeatureTable& users, const FeatureTable& items,
                                               const TrainConfig& config, Task task, MainEffectsModel& main) {
  config.validate();
  if (static_cast<std::size_t>(residuals.size()) != split.train.size()) {
    throw ValidationError("residuals must align with the training split");
  }
  ManifestModel model;
  for (const auto& [a, b] : candidate_pairs(users, items, &main)) {
    PairEffect p;
    p.user_feature = a;
    p.item_feature = b;
    p.name = pair_name(users.features()[static_cast<std::size_t>(a)].name, items.features()[static_cast<std::size_t>(b)].name);
    Rng rng = make_rng(config.seed, "pair/" + p.name);
    p.net = Subnet::glorot(2, rng);
    model.pairs.push_back(std::move(p));
  }
  if (model.pairs.empty()) return model;

  std::vector<EffectFunction> fns;
  std::vector<TermInputs> design;
  for (auto& p : model.pairs) {
    fns.emplace_back(std::move(p.net));
    design.push_back(detail::pair_inputs(p, split.train.triples, users, items));
  }
  std::vector<EffectFunction*> terms;
  for (auto& f : fns) terms.push_back(&f);
  TrainConfig stage = config;
  stage.seed = derive_seed(config.seed, "stage2");
  model.trace = train_additive(terms, nullptr, design, Eigen::VectorXd::Zero(residuals.size()), residuals, stage,
                               Loss::kSquared, config.max_epochs);

  for (std::size_t t = 0; t < model.pairs.size(); ++t) {
    main.intercept += detail::center(fns[t], design[t]);
    model.pairs[t].variation = effect_variation(detail::evaluate(fns[t], design[t]));
    model.pairs[t].net = std::get<Subnet>(std::move(fns[t]));
  }
  model.pairs = detail::permute(std::move(model.pairs), detail::order_by_variation(model.pairs));

  const Eigen::VectorXd yv = split.validation.responses();
  const Eigen::VectorXd base = main_effect_scores(main, split.validation.triples, users, items);
  std::vector<Eigen::VectorXd> contrib;
  for (const auto& p : model.pairs) {
    contrib.push_back(detail::evaluate(p.net, detail::pair_inputs(p, split.validation.triples, users, items)));
  }
  const int keep = prune_by_validation(base, contrib, yv, loss_for(task), &model.pruning_losses);
  for (int s = 0; s < keep; ++s) model.pairs[static_cast<std::size_t>(s)].retained = true;
  return model;
}

// Jointly re-trains the intercept and every retained effect of both stages on
// the task loss, then re-centers. No-op when nothing is retained.
inline TrainTrace fine_tune(MainEffectsModel& main, ManifestModel& manifest, const DataSplit& split,
                            const FeatureTable& users, const FeatureTable& items, const TrainConfig& config, Task task) {
  config.validate();
  std::vector<MainEffect*> mains;
  std::vector<PairEffect*> pairs;
  for (auto& e : main.effects) {
    if (e.retained) mains.push_back(&e);
  }
  for (auto& p : manifest.pairs) {
    if (p.retained) pairs.push_back(&p);
  }
  if (mains.empty() && pairs.empty()) return {};

  const auto& obs = split.train.triples;
  std::vector<EffectFunction> pair_fns;
  pair_fns.reserve(pairs.size());
  for (auto* p : pairs) pair_fns.emplace_back(std::move(p->net));
  std::vector<EffectFunction*> terms;
  std::vector<TermInputs> design;
  for (auto* e : mains) {
    terms.push_back(&e->fn);
    design.push_back(detail::main_inputs(*e, obs, users, items));
  }
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    terms.push_back(&pair_fns[k]);
    design.push_back(detail::pair_inputs(*pairs[k], obs, users, items));
  }
  const Eigen::VectorXd y = split.train.responses();
  TrainConfig stage = config;
  stage.seed = derive_seed(config.seed, "fine_tune");
  TrainTrace trace = train_additive(terms, &main.intercept, design, Eigen::VectorXd::Zero(y.size()), y, stage,
                                    loss_for(task), config.fine_tune_epochs);

  for (std::size_t t = 0; t < terms.size(); ++t) main.intercept += detail::center(*terms[t], design[t]);
  for (std::size_t t = 0; t < mains.size(); ++t) mains[t]->variation = effect_variation(detail::evaluate(mains[t]->fn, design[t]));
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const std::size_t t = mains.size() + k;
    pairs[k]->variation = effect_variation(detail::evaluate(pair_fns[k], design[t]));
    pairs[k]->net = std::get<Subnet>(std::move(pair_fns[k]));
  }
  return trace;
}

}  // namespace gammli

#endif  // GAMMLI_ADDITIVE_HPP_
