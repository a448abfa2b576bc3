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

#ifndef GAMMLI_MODEL_IO_HPP_
#define GAMMLI_MODEL_IO_HPP_

#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "gammli/model.hpp"

namespace gammli {

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kModelFormatName = "gammli-model";

namespace io {

using Json = nlohmann::ordered_json;

inline Json vec(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

inline Json mat(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline const Json& at(const Json& j, const std::string& key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw SchemaError("model file: '" + where + "' lacks field '" + key + "'");
  return j.at(key);
}

template <class T>
T get(const Json& j, const std::string& key, const std::string& where) {
  try {
    return at(j, key, where).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("model file: field '" + where + "." + key + "' has the wrong type");
  }
}

inline Eigen::VectorXd to_vec(const Json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError("model file: '" + where + "' must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) {
    if (!j[k].is_number()) throw SchemaError("model file: '" + where + "' holds a non-number");
    v(static_cast<Eigen::Index>(k)) = j[k].get<double>();
  }
  return v;
}

inline Eigen::MatrixXd to_mat(const Json& j, Eigen::Index cols, const std::string& where) {
  if (!j.is_array()) throw SchemaError("model file: '" + where + "' must be an array of rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Eigen::VectorXd row = to_vec(j[r], where);
    if (row.size() != cols) throw SchemaError("model file: '" + where + "' has a row of the wrong width");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

inline Json config_json(const FitConfig& c) {
  return Json{{"learning_rate", c.train.learning_rate},
              {"max_epochs", c.train.max_epochs},
              {"fine_tune_epochs", c.train.fine_tune_epochs},
              {"batch_size", c.train.batch_size},
              {"patience_epochs", c.train.patience_epochs},
              {"validation_fraction", c.train.validation_fraction},
              {"seed", c.train.seed},
              {"user_groups", c.user_groups},
              {"item_groups", c.item_groups},
              {"lambda", c.lambda},
              {"rank", c.rank},
              {"latent_max_iterations", c.latent_max_iterations},
              {"latent_tolerance", c.latent_tolerance},
              {"kmeans_restarts", c.kmeans.restarts},
              {"kmeans_max_iterations", c.kmeans.max_iterations}};
}

inline FitConfig config_from(const Json& j) {
  const std::string w = "meta.config";
  FitConfig c;
  c.train.learning_rate = get<double>(j, "learning_rate", w);
  c.train.max_epochs = get<int>(j, "max_epochs", w);
  c.train.fine_tune_epochs = get<int>(j, "fine_tune_epochs", w);
  c.train.batch_size = get<int>(j, "batch_size", w);
  c.train.patience_epochs = get<int>(j, "patience_epochs", w);
  c.train.validation_fraction = get<double>(j, "validation_fraction", w);
  c.train.seed = get<std::uint64_t>(j, "seed", w);
  c.user_groups = get<int>(j, "user_groups", w);
  c.item_groups = get<int>(j, "item_groups", w);
  c.lambda = get<double>(j, "lambda", w);
  c.rank = get<int>(j, "rank", w);
  c.latent_max_iterations = get<int>(j, "latent_max_iterations", w);
  c.latent_tolerance = get<double>(j, "latent_tolerance", w);
  c.kmeans.restarts = get<int>(j, "kmeans_restarts", w);
  c.kmeans.max_iterations = get<int>(j, "kmeans_max_iterations", w);
  return c;
}

inline Json columns_json(const FeatureTable& t) {
  Json cols = Json::array();
  for (const auto& c : t.columns()) {
    cols.push_back(Json{{"name", c.name}, {"kind", std::string(to_string(c.kind))}, {"source", c.source}, {"level", c.level}});
  }
  return cols;
}

inline std::vector<Column> columns_from(const Json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError("model file: '" + where + "' must be an array");
  std::vector<Column> cols;
  for (const auto& c : j) {
    cols.push_back({get<std::string>(c, "name", where), parse_column_kind(get<std::string>(c, "kind", where)),
                    get<std::string>(c, "source", where), get<std::string>(c, "level", where)});
  }
  return cols;
}

inline Json ranges_json(const ScalingParams& p) {
  Json out = Json::array();
  for (const auto& r : p.ranges) out.push_back(Json{{"column", r.column}, {"min", r.min}, {"max", r.max}});
  return out;
}

inline ScalingParams ranges_from(const Json& j, const std::string& where) {
  if (!j.is_array()) throw SchemaError("model file: '" + where + "' must be an array");
  ScalingParams p;
  for (const auto& r : j) {
    p.ranges.push_back({get<std::string>(r, "column", where), get<double>(r, "min", where), get<double>(r, "max", where)});
  }
  return p;
}

inline Json subnet_json(const Subnet& s) {
  return Json{{"arity", s.arity()}, {"params", vec(s.params())}, {"output_offset", s.output_offset()}};
}

inline Subnet subnet_from(const Json& j, const std::string& where) {
  Subnet s(get<int>(j, "arity", where));
  const Eigen::VectorXd p = to_vec(at(j, "params", where), where + ".params");
  if (p.size() != s.params().size()) throw SchemaError("model file: '" + where + "' has the wrong parameter count");
  s.params() = p;
  s.set_output_offset(get<double>(j, "output_offset", where));
  return s;
}

inline Json clustering_json(const FeatureTable& t, const Clustering& c, const std::vector<int>& observations) {
  return Json{{"ids", t.ids()},
              {"features", mat(t.values())},
              {"observations", observations},
              {"k", c.k},
              {"assignments", c.assignments},
              {"centroids", mat(c.centroids)},
              {"inertia", c.inertia}};
}

}  // namespace io

inline io::Json model_to_json(const GammliModel& m) {
  using io::Json;
  Json root;
  root["meta"] = Json{{"format", kModelFormatName},
                      {"version", kModelFormatVersion},
                      {"task", std::string(to_string(m.task))},
                      {"config", io::config_json(m.config)}};
  root["scaling"] = Json{{"user_columns", io::columns_json(m.users)},
                         {"item_columns", io::columns_json(m.items)},
                         {"user_ranges", io::ranges_json(m.user_scaling)},
                         {"item_ranges", io::ranges_json(m.item_scaling)}};
  Json effects = Json::array();
  for (const auto& e : m.main.effects) {
    Json je{{"name", e.name}, {"side", std::string(to_string(e.side))}, {"feature", e.feature}};
    if (const auto* net = std::get_if<Subnet>(&e.fn)) {
      je["kind"] = "subnet";
      je["subnet"] = io::subnet_json(*net);
    } else {
      je["kind"] = "categorical";
      je["offsets"] = io::vec(std::get<CategoricalEffect>(e.fn).offsets);
    }
    je["variation"] = e.variation;
    je["retained"] = e.retained;
    effects.push_back(std::move(je));
  }
  root["main_effects"] = Json{{"intercept", m.main.intercept}, {"effects", std::move(effects)},
                              {"pruning_losses", m.main.pruning_losses}};
  Json pairs = Json::array();
  for (const auto& p : m.manifest.pairs) {
    pairs.push_back(Json{{"name", p.name},
                         {"user_feature", p.user_feature},
                         {"item_feature", p.item_feature},
                         {"subnet", io::subnet_json(p.net)},
                         {"variation", p.variation},
                         {"retained", p.retained}});
  }
  root["manifest_interactions"] = Json{{"pairs", std::move(pairs)}, {"pruning_losses", m.manifest.pruning_losses}};
  const auto& l = m.latent;
  root["latent"] = Json{{"rank", l.rank},
                        {"lambda", l.lambda},
                        {"sigma", io::vec(l.sigma)},
                        {"u", io::mat(l.u)},
                        {"v", io::mat(l.v)},
                        {"user_centroids", io::mat(l.user_centroids)},
                        {"item_centroids", io::mat(l.item_centroids)},
                        {"objective", l.objective},
                        {"rmse", l.rmse},
                        {"iterations", l.iterations},
                        {"converged", l.converged}};
  root["clusters"] = Json{{"user", io::clustering_json(m.users, m.user_clusters, m.user_observations)},
                          {"item", io::clustering_json(m.items, m.item_clusters, m.item_observations)}};
  return root;
}

namespace io {

inline Clustering clustering_from(const Json& j, const std::vector<Column>& columns, const std::string& where,
                                  FeatureTable& table, std::vector<int>& observations) {
  const auto ids = get<std::vector<std::string>>(j, "ids", where);
  observations = get<std::vector<int>>(j, "observations", where);
  if (!observations.empty() && observations.size() != ids.size()) {
    throw SchemaError("model file: '" + where + "' ids/observations mismatch");
  }
  const auto cols = static_cast<Eigen::Index>(columns.size());
  Eigen::MatrixXd values = to_mat(at(j, "features", where), cols, where + ".features");
  if (values.rows() != static_cast<Eigen::Index>(ids.size())) throw SchemaError("model file: '" + where + "' ids/features mismatch");
  table = FeatureTable(ids, columns, std::move(values));
  Clustering c;
  c.k = get<int>(j, "k", where);
  c.assignments = get<std::vector<int>>(j, "assignments", where);
  c.centroids = to_mat(at(j, "centroids", where), cols, where + ".centroids");
  c.inertia = get<double>(j, "inertia", where);
  if (c.assignments.size() != ids.size() || c.centroids.rows() != c.k) {
    throw SchemaError("model file: '" + where + "' is inconsistent");
  }
  for (int a : c.assignments) {
    if (a < 0 || a >= c.k) throw SchemaError("model file: '" + where + "' has an out-of-range assignment");
  }
  return c;
}

}  // namespace io

inline GammliModel model_from_json(const io::Json& root) {
  using io::at;
  using io::get;
  if (!root.is_object()) throw SchemaError("model file: top level must be an object");
  for (const char* section : {"meta", "scaling", "main_effects", "manifest_interactions", "latent", "clusters"}) {
    if (!root.contains(section)) throw SchemaError(std::string("model file: missing section '") + section + "'");
  }
  const auto& meta = root.at("meta");
  if (get<std::string>(meta, "format", "meta") != kModelFormatName) throw SchemaError("model file: not a gammli model");
  const int version = get<int>(meta, "version", "meta");
  if (version != kModelFormatVersion) {
    throw VersionError("model file: unsupported format version " + std::to_string(version) + " (expected " +
                       std::to_string(kModelFormatVersion) + ")");
  }
  GammliModel m;
  m.task = parse_task(get<std::string>(meta, "task", "meta"));
  m.config = io::config_from(at(meta, "config", "meta"));

  const auto& sc = root.at("scaling");
  const auto user_cols = io::columns_from(at(sc, "user_columns", "scaling"), "scaling.user_columns");
  const auto item_cols = io::columns_from(at(sc, "item_columns", "scaling"), "scaling.item_columns");
  m.user_scaling = io::ranges_from(at(sc, "user_ranges", "scaling"), "scaling.user_ranges");
  m.item_scaling = io::ranges_from(at(sc, "item_ranges", "scaling"), "scaling.item_ranges");

  const auto& cl = root.at("clusters");
  m.user_clusters = io::clustering_from(at(cl, "user", "clusters"), user_cols, "clusters.user", m.users, m.user_observations);
  m.item_clusters = io::clustering_from(at(cl, "item", "clusters"), item_cols, "clusters.item", m.items, m.item_observations);

  const auto& me = root.at("main_effects");
  m.main.intercept = get<double>(me, "intercept", "main_effects");
  m.main.pruning_losses = get<std::vector<double>>(me, "pruning_losses", "main_effects");
  for (const auto& je : at(me, "effects", "main_effects")) {
    const std::string w = "main_effects.effects";
    MainEffect e;
    e.name = get<std::string>(je, "name", w);
    const auto side = get<std::string>(je, "side", w);
    if (side != "user" && side != "item") throw SchemaError("model file: bad side '" + side + "'");
    e.side = side == "user" ? Side::kUser : Side::kItem;
    e.feature = get<int>(je, "feature", w);
    const auto& table = e.side == Side::kUser ? m.users : m.items;
    if (e.feature < 0 || e.feature >= static_cast<int>(table.features().size())) {
      throw SchemaError("model file: effect '" + e.name + "' refers to an unknown feature");
    }
    const auto kind = get<std::string>(je, "kind", w);
    if (kind == "subnet") {
      e.fn = io::subnet_from(at(je, "subnet", w), w + ".subnet");
    } else if (kind == "categorical") {
      CategoricalEffect c;
      c.offsets = io::to_vec(at(je, "offsets", w), w + ".offsets");
      e.fn = std::move(c);
    } else {
      throw SchemaError("model file: unknown effect kind '" + kind + "'");
    }
    e.variation = get<double>(je, "variation", w);
    e.retained = get<bool>(je, "retained", w);
    m.main.effects.push_back(std::move(e));
  }

  const auto& mi = root.at("manifest_interactions");
  m.manifest.pruning_losses = get<std::vector<double>>(mi, "pruning_losses", "manifest_interactions");
  for (const auto& jp : at(mi, "pairs", "manifest_interactions")) {
    const std::string w = "manifest_interactions.pairs";
    PairEffect p;
    p.name = get<std::string>(jp, "name", w);
    p.user_feature = get<int>(jp, "user_feature", w);
    p.item_feature = get<int>(jp, "item_feature", w);
    if (p.user_feature < 0 || p.user_feature >= static_cast<int>(m.users.features().size()) || p.item_feature < 0 ||
        p.item_feature >= static_cast<int>(m.items.features().size())) {
      throw SchemaError("model file: pair '" + p.name + "' refers to an unknown feature");
    }
    p.net = io::subnet_from(at(jp, "subnet", w), w + ".subnet");
    p.variation = get<double>(jp, "variation", w);
    p.retained = get<bool>(jp, "retained", w);
    m.manifest.pairs.push_back(std::move(p));
  }

  const auto& lj = root.at("latent");
  auto& l = m.latent;
  l.rank = get<int>(lj, "rank", "latent");
  l.lambda = get<double>(lj, "lambda", "latent");
  l.sigma = io::to_vec(at(lj, "sigma", "latent"), "latent.sigma");
  l.u = io::to_mat(at(lj, "u", "latent"), l.rank, "latent.u");
  l.v = io::to_mat(at(lj, "v", "latent"), l.rank, "latent.v");
  l.user_centroids = io::to_mat(at(lj, "user_centroids", "latent"), l.rank, "latent.user_centroids");
  l.item_centroids = io::to_mat(at(lj, "item_centroids", "latent"), l.rank, "latent.item_centroids");
  l.objective = get<std::vector<double>>(lj, "objective", "latent");
  l.rmse = get<std::vector<double>>(lj, "rmse", "latent");
  l.iterations = get<int>(lj, "iterations", "latent");
  l.converged = get<bool>(lj, "converged", "latent");
  if (l.sigma.size() != l.rank || l.u.rows() != m.users.rows() || l.v.rows() != m.items.rows() ||
      l.user_centroids.rows() != m.user_clusters.k || l.item_centroids.rows() != m.item_clusters.k) {
    throw SchemaError("model file: latent section does not match the clusters section");
  }
  l.user_groups = m.user_clusters.assignments;
  l.item_groups = m.item_clusters.assignments;
  l.user_group_count = m.user_clusters.k;
  l.item_group_count = m.item_clusters.k;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(l.rank);
  for (int c = 0; c < l.rank; ++c) inv(c) = l.sigma(c) > 0.0 ? 1.0 / l.sigma(c) : 0.0;
  l.u_star = l.u * inv.asDiagonal();
  l.v_star = l.v * inv.asDiagonal();
  return m;
}

inline std::string model_to_string(const GammliModel& m) { return model_to_json(m).dump(1) + "\n"; }

inline GammliModel model_from_string(const std::string& text) {
  static constexpr const char* kSections[] = {"meta", "scaling", "main_effects", "manifest_interactions", "latent",
                                              "clusters"};
  io::Json root;
  try {
    root = io::Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    // Report the first section the text does not contain in full.
    const std::size_t cut = std::min<std::size_t>(e.byte, text.size());
    for (std::size_t s = 0; s < std::size(kSections); ++s) {
      const std::string key = std::string("\"") + kSections[s] + "\": ";
      const auto pos = text.find(key);
      const auto next = s + 1 < std::size(kSections) ? text.find(std::string("\"") + kSections[s + 1] + "\": ") : std::string::npos;
      if (pos == std::string::npos || pos >= cut) {
        throw ParseError(std::string("model file is truncated: missing section '") + kSections[s] + "'");
      }
      if (next == std::string::npos || next >= cut) {
        throw ParseError(std::string("model file is truncated inside section '") + kSections[s] + "'");
      }
    }
    throw ParseError(std::string("model file is malformed: ") + e.what());
  }
  return model_from_json(root);
}

inline void save_model(const std::string& path, const GammliModel& m) {
  auto out = csv::open_out(path);
  out << model_to_string(m);
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

inline GammliModel load_model(const std::string& path) {
  auto in = csv::open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_string(ss.str());
}

}  // namespace gammli

#endif  // GAMMLI_MODEL_IO_HPP_
