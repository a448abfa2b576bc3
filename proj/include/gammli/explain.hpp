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

#ifndef GAMMLI_EXPLAIN_HPP_
#define GAMMLI_EXPLAIN_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "gammli/model.hpp"

namespace gammli {

enum class EffectKind { kIntercept, kMain, kPair, kLatent };

inline std::string_view to_string(EffectKind k) {
  switch (k) {
    case EffectKind::kIntercept: return "intercept";
    case EffectKind::kMain: return "main";
    case EffectKind::kPair: return "pair";
    case EffectKind::kLatent: return "latent";
  }
  return "";
}

struct EffectImportance {
  std::string name;
  EffectKind kind = EffectKind::kMain;
  double variation = 0.0;
  double ratio = 0.0;
};

struct ImportanceReport {
  std::vector<EffectImportance> effects;  // retained effects in model order, then the latent block
  double total = 0.0;

  const EffectImportance* find(std::string_view name) const {
    for (const auto& e : effects) {
      if (e.name == name) return &e;
    }
    return nullptr;
  }
  double ratio(std::string_view name) const {
    const auto* e = find(name);
    return e ? e->ratio : 0.0;
  }
};

// Variation of every retained term over the training observations:
//   D = sum(effect^2) / (N - 1) for main and pair effects,
//   D = sum((latent - mean latent)^2) / (N - 1) for the latent block,
// and its share of the total. All ratios are 0 when nothing varies.
inline ImportanceReport importance_ratios(const GammliModel& model, const FeatureTable& users,
                                          const FeatureTable& items, const std::vector<Triple>& train) {
  if (train.size() < 2) throw ValidationError("importance ratios need at least 2 training observations");
  std::vector<EntityState> us, is;
  std::vector<std::pair<int, int>> pairs;
  {
    std::vector<int> uslot(static_cast<std::size_t>(users.rows()), -1), islot(static_cast<std::size_t>(items.rows()), -1);
    for (const auto& t : train) {
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
  }
  const ScoreMatrix s = score_pairs(model, us, is, pairs);
  const double denom = static_cast<double>(train.size() - 1);
  const auto retained_mains = static_cast<std::size_t>(model.main.retained_count());

  ImportanceReport report;
  for (std::size_t c = 1; c < s.names.size(); ++c) {
    const auto col = s.parts.col(static_cast<Eigen::Index>(c));
    EffectImportance e;
    e.name = s.names[c];
    if (c + 1 == s.names.size()) {
      e.kind = EffectKind::kLatent;
      e.variation = (col.array() - col.mean()).square().sum() / denom;
    } else {
      e.kind = c <= retained_mains ? EffectKind::kMain : EffectKind::kPair;
      e.variation = col.squaredNorm() / denom;
    }
    report.total += e.variation;
    report.effects.push_back(std::move(e));
  }
  for (auto& e : report.effects) e.ratio = report.total > 0.0 ? e.variation / report.total : 0.0;
  return report;
}

// ---------------------------------------------------------------------------

struct EffectCurve {
  std::string name;
  bool pruned = false;
  bool categorical = false;
  std::vector<double> grid;          // numeric inputs, or level indices
  std::vector<std::string> levels;   // categorical only
  std::vector<double> values;
  std::vector<double> bin_edges;     // numeric: 21 edges over [0, 1]
  std::vector<double> density;       // numeric: per-bin density; categorical: per-level frequency
};

inline constexpr int kDensityBins = 20;

inline EffectCurve main_effect_curve(const GammliModel& model, const std::string& feature, int grid_size = 50) {
  const MainEffect* e = model.main.find(feature);
  if (e == nullptr) throw ValidationError("unknown main effect '" + feature + "'");
  EffectCurve c;
  c.name = feature;
  if (!e->retained) {
    c.pruned = true;
    return c;
  }
  const FeatureTable& table = e->side == Side::kUser ? model.users : model.items;
  const Feature& f = table.features()[static_cast<std::size_t>(e->feature)];
  // Each entity counts once per training observation (once if unknown).
  const auto& obs = e->side == Side::kUser ? model.user_observations : model.item_observations;
  auto weight = [&](int r) { return obs.empty() ? 1.0 : static_cast<double>(obs[static_cast<std::size_t>(r)]); };
  double total = 0.0;
  for (int r = 0; r < table.rows(); ++r) total += weight(r);
  if (f.kind == ColumnKind::kCategorical) {
    c.categorical = true;
    const auto& cat = std::get<CategoricalEffect>(e->fn);
    std::vector<double> counts(f.levels.size(), 0.0);
    for (int r = 0; r < table.rows(); ++r) {
      const int level = feature_level(f, table.values().row(r));
      if (level >= 0) counts[static_cast<std::size_t>(level)] += weight(r);
    }
    for (std::size_t k = 0; k < f.levels.size(); ++k) {
      c.grid.push_back(static_cast<double>(k));
      c.levels.push_back(f.levels[k]);
      c.values.push_back(cat(static_cast<int>(k)));
      c.density.push_back(total > 0.0 ? counts[k] / total : 0.0);
    }
    return c;
  }
  if (grid_size < 1) throw ValidationError("grid_size must be positive");
  const auto& net = std::get<Subnet>(e->fn);
  for (int g = 0; g < grid_size; ++g) {
    const double x = grid_size == 1 ? 0.0 : static_cast<double>(g) / static_cast<double>(grid_size - 1);
    c.grid.push_back(x);
    c.values.push_back(net(x));
  }
  std::vector<double> counts(kDensityBins, 0.0);
  for (int r = 0; r < table.rows(); ++r) {
    const double x = std::clamp(feature_value(f, table.values().row(r)), 0.0, 1.0);
    const int bin = std::min(kDensityBins - 1, static_cast<int>(x * kDensityBins));
    counts[static_cast<std::size_t>(bin)] += weight(r);
  }
  for (int b = 0; b <= kDensityBins; ++b) c.bin_edges.push_back(static_cast<double>(b) / kDensityBins);
  for (double k : counts) c.density.push_back(total > 0.0 ? k * kDensityBins / total : 0.0);
  return c;
}

struct InteractionSurface {
  std::string name;
  bool pruned = false;
  std::vector<double> grid;
  Eigen::MatrixXd values;  // rows: user feature grid, columns: item feature grid
};

inline InteractionSurface interaction_surface(const GammliModel& model, const std::string& pair, int grid_size = 20) {
  const PairEffect* p = model.manifest.find(pair);
  if (p == nullptr) throw ValidationError("unknown pair effect '" + pair + "'");
  InteractionSurface s;
  s.name = pair;
  if (!p->retained) {
    s.pruned = true;
    return s;
  }
  if (grid_size < 1) throw ValidationError("grid_size must be positive");
  for (int g = 0; g < grid_size; ++g) {
    s.grid.push_back(grid_size == 1 ? 0.0 : static_cast<double>(g) / static_cast<double>(grid_size - 1));
  }
  s.values.resize(grid_size, grid_size);
  for (int a = 0; a < grid_size; ++a)
    for (int b = 0; b < grid_size; ++b) s.values(a, b) = p->net(s.grid[static_cast<std::size_t>(a)], s.grid[static_cast<std::size_t>(b)]);
  return s;
}

struct GroupReport {
  Eigen::MatrixXd matrix;         // K x L centroid inner products
  Eigen::MatrixXd user_profiles;  // K x user columns, mean scaled features
  Eigen::MatrixXd item_profiles;
  std::vector<int> user_sizes;
  std::vector<int> item_sizes;
};

inline Eigen::MatrixXd cluster_profiles(const FeatureTable& t, const Clustering& c) {
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(c.k, t.cols());
  std::vector<int> counts(static_cast<std::size_t>(c.k), 0);
  for (int r = 0; r < t.rows(); ++r) {
    const int g = c.assignments[static_cast<std::size_t>(r)];
    sum.row(g) += t.values().row(r);
    ++counts[static_cast<std::size_t>(g)];
  }
  for (int g = 0; g < c.k; ++g) {
    if (counts[static_cast<std::size_t>(g)] > 0) sum.row(g) /= counts[static_cast<std::size_t>(g)];
  }
  return sum;
}

// Entry (k, l) is computed exactly as the latent term of a cold user in
// group k paired with a cold item in group l.
inline GroupReport group_interaction_matrix(const GammliModel& model) {
  GroupReport g;
  const auto& uc = model.latent.user_centroids;
  const auto& ic = model.latent.item_centroids;
  g.matrix.resize(uc.rows(), ic.rows());
  for (Eigen::Index k = 0; k < uc.rows(); ++k) {
    const Eigen::RowVectorXd u = uc.row(k);
    for (Eigen::Index l = 0; l < ic.rows(); ++l) {
      const Eigen::RowVectorXd v = ic.row(l);
      g.matrix(k, l) = u.dot(v);
    }
  }
  g.user_profiles = cluster_profiles(model.users, model.user_clusters);
  g.item_profiles = cluster_profiles(model.items, model.item_clusters);
  g.user_sizes = model.user_clusters.counts();
  g.item_sizes = model.item_clusters.counts();
  return g;
}

struct LocalExplanation {
  PredictionResult prediction;
  std::vector<Contribution> ranked;  // by decreasing |value|
};

inline LocalExplanation explain_prediction(PredictionResult p) {
  LocalExplanation out;
  for (const auto& t : p.terms) {
    // A latent term of exactly zero (e.g. zero factors) is left out.
    if (t.name == "latent" && t.value == 0.0) continue;
    out.ranked.push_back(t);
  }
  std::stable_sort(out.ranked.begin(), out.ranked.end(),
                   [](const Contribution& a, const Contribution& b) { return std::abs(a.value) > std::abs(b.value); });
  out.prediction = std::move(p);
  return out;
}

inline LocalExplanation local_explanation(const GammliModel& model, const std::string& user_id, const std::string& item_id,
                                          const FeatureTable* user_features = nullptr,
                                          const FeatureTable* item_features = nullptr) {
  return explain_prediction(predict(model, user_id, item_id, user_features, item_features));
}

// ---------------------------------------------------------------------------
// Exports.

namespace detail {

inline std::string safe_file_part(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.') ? c : '_';
  return out;
}

}  // namespace detail

inline nlohmann::ordered_json importance_json(const GammliModel& model, const ImportanceReport& r) {
  using Json = nlohmann::ordered_json;
  Json effects = Json::array();
  for (const auto& e : r.effects) {
    effects.push_back(Json{{"name", e.name}, {"kind", std::string(to_string(e.kind))}, {"variation", e.variation},
                           {"importance_ratio", e.ratio}, {"status", "retained"}});
  }
  for (const auto& e : model.main.effects) {
    if (!e.retained) effects.push_back(Json{{"name", e.name}, {"kind", "main"}, {"status", "pruned"}});
  }
  for (const auto& p : model.manifest.pairs) {
    if (!p.retained) effects.push_back(Json{{"name", p.name}, {"kind", "pair"}, {"status", "pruned"}});
  }
  return Json{{"intercept", model.main.intercept}, {"total_variation", r.total}, {"effects", std::move(effects)}};
}

inline nlohmann::ordered_json local_json(const LocalExplanation& l) {
  using Json = nlohmann::ordered_json;
  Json terms = Json::array();
  for (const auto& c : l.ranked) terms.push_back(Json{{"name", c.name}, {"contribution", c.value}});
  const auto& p = l.prediction;
  return Json{{"user_id", p.user_id},      {"item_id", p.item_id},     {"score", p.score},
              {"prediction", p.value},     {"cold_user", p.cold_user}, {"cold_item", p.cold_item},
              {"user_group", p.user_group}, {"item_group", p.item_group}, {"contributions", std::move(terms)}};
}

inline void write_curve_csv(std::ostream& out, const EffectCurve& c) {
  out << "series,x,value\n";
  for (std::size_t k = 0; k < c.values.size(); ++k) {
    out << "effect," << (c.categorical ? csv::quote_if_needed(c.levels[k]) : csv::format_double(c.grid[k])) << ','
        << csv::format_double(c.values[k]) << '\n';
  }
  for (std::size_t k = 0; k < c.density.size(); ++k) {
    const std::string x = c.categorical ? csv::quote_if_needed(c.levels[k])
                                        : csv::format_double(0.5 * (c.bin_edges[k] + c.bin_edges[k + 1]));
    out << "density," << x << ',' << csv::format_double(c.density[k]) << '\n';
  }
}

inline void write_surface_csv(std::ostream& out, const InteractionSurface& s) {
  out << "x,z,value\n";
  for (std::size_t a = 0; a < s.grid.size(); ++a)
    for (std::size_t b = 0; b < s.grid.size(); ++b) {
      out << csv::format_double(s.grid[a]) << ',' << csv::format_double(s.grid[b]) << ','
          << csv::format_double(s.values(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b))) << '\n';
    }
}

inline void write_group_matrix_csv(std::ostream& out, const GroupReport& g) {
  out << "user_group";
  for (Eigen::Index l = 0; l < g.matrix.cols(); ++l) out << ",item_group_" << l;
  out << '\n';
  for (Eigen::Index k = 0; k < g.matrix.rows(); ++k) {
    out << k;
    for (Eigen::Index l = 0; l < g.matrix.cols(); ++l) out << ',' << csv::format_double(g.matrix(k, l));
    out << '\n';
  }
}

inline void write_group_profiles_csv(std::ostream& out, const GammliModel& model, const GroupReport& g) {
  out << "side,group,size,column,value\n";
  auto emit = [&](const char* side, const Eigen::MatrixXd& prof, const std::vector<int>& sizes, const FeatureTable& t) {
    for (Eigen::Index k = 0; k < prof.rows(); ++k)
      for (Eigen::Index c = 0; c < prof.cols(); ++c) {
        out << side << ',' << k << ',' << sizes[static_cast<std::size_t>(k)] << ','
            << csv::quote_if_needed(t.columns()[static_cast<std::size_t>(c)].name) << ','
            << csv::format_double(prof(k, c)) << '\n';
      }
  };
  emit("user", g.user_profiles, g.user_sizes, model.users);
  emit("item", g.item_profiles, g.item_sizes, model.items);
}

struct ExplainOptions {
  int curve_grid = 50;
  int surface_grid = 20;
  std::vector<std::pair<std::string, std::string>> locals;  // (user id, item id) pairs to explain
};

// Writes importance.json, main_<f>.csv and pair_<a>__<b>.csv for retained
// effects, group_matrix.csv, group_profiles.csv and local_<u>_<i>.json.
inline void write_explanations(const std::string& dir, const GammliModel& model, const FeatureTable& users,
                               const FeatureTable& items, const std::vector<Triple>& train, const ExplainOptions& opt = {}) {
  std::filesystem::create_directories(dir);
  const ImportanceReport ir = importance_ratios(model, users, items, train);
  {
    auto out = csv::open_out(dir + "/importance.json");
    out << importance_json(model, ir).dump(2) << '\n';
  }
  for (const auto& e : model.main.effects) {
    if (!e.retained) continue;
    auto out = csv::open_out(dir + "/main_" + detail::safe_file_part(e.name) + ".csv");
    write_curve_csv(out, main_effect_curve(model, e.name, opt.curve_grid));
  }
  for (const auto& p : model.manifest.pairs) {
    if (!p.retained) continue;
    auto out = csv::open_out(dir + "/pair_" + detail::safe_file_part(p.name) + ".csv");
    write_surface_csv(out, interaction_surface(model, p.name, opt.surface_grid));
  }
  const GroupReport g = group_interaction_matrix(model);
  {
    auto out = csv::open_out(dir + "/group_matrix.csv");
    write_group_matrix_csv(out, g);
  }
  {
    auto out = csv::open_out(dir + "/group_profiles.csv");
    write_group_profiles_csv(out, model, g);
  }
  for (const auto& [u, i] : opt.locals) {
    auto out = csv::open_out(dir + "/local_" + detail::safe_file_part(u) + "_" + detail::safe_file_part(i) + ".json");
    out << local_json(local_explanation(model, u, i, &users, &items)).dump(2) << '\n';
  }
}

}  // namespace gammli

#endif  // GAMMLI_EXPLAIN_HPP_
