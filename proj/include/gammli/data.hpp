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

#ifndef GAMMLI_DATA_HPP_
#define GAMMLI_DATA_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gammli/error.hpp"
#include "gammli/random.hpp"

namespace gammli {

// ---------------------------------------------------------------------------
// Text helpers

namespace csv {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Splits one comma-delimited record. Double-quoted fields may contain commas;
// a doubled quote inside a quoted field is a literal quote.
inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.emplace_back(trim(cur));
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline bool getline(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    if (!trim(line).empty()) return true;
  }
  return false;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "' for reading");
  return in;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace csv

// ---------------------------------------------------------------------------
// Feature tables

enum class ColumnKind { kNumeric, kCategorical };

inline std::string_view to_string(ColumnKind kind) {
  return kind == ColumnKind::kNumeric ? "numeric" : "categorical";
}

inline ColumnKind parse_column_kind(std::string_view s) {
  if (s == "numeric") return ColumnKind::kNumeric;
  if (s == "categorical") return ColumnKind::kCategorical;
  throw ValidationError("unknown column kind '" + std::string(s) + "'");
}

// Declared input column.
struct ColumnSpec {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
};
using Schema = std::vector<ColumnSpec>;

// Expanded column as stored in FeatureTable::values. Categorical inputs
// produce one indicator column per level named "<source>=<level>".
struct Column {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  std::string source;
  std::string level;

  bool operator==(const Column&) const = default;
};

// A logical feature: one declared input column and the value columns it owns.
struct Feature {
  std::string name;
  ColumnKind kind = ColumnKind::kNumeric;
  std::vector<int> columns;
  std::vector<std::string> levels;
};

class FeatureTable {
 public:
  FeatureTable() = default;

  FeatureTable(std::vector<std::string> ids, std::vector<Column> columns, Eigen::MatrixXd values)
      : ids_(std::move(ids)), columns_(std::move(columns)), values_(std::move(values)) {
    if (values_.rows() != static_cast<Eigen::Index>(ids_.size()) ||
        values_.cols() != static_cast<Eigen::Index>(columns_.size())) {
      throw ValidationError("feature table shape does not match ids/columns");
    }
    for (std::size_t r = 0; r < ids_.size(); ++r) {
      if (!index_.emplace(ids_[r], static_cast<int>(r)).second) {
        throw ValidationError("duplicate id '" + ids_[r] + "'");
      }
    }
    if (!values_.allFinite()) throw ValidationError("feature table contains non-finite values");
    rebuild_features();
  }

  // Convenience constructor for all-numeric tables.
  static FeatureTable numeric(std::vector<std::string> ids, const std::vector<std::string>& names,
                              Eigen::MatrixXd values) {
    std::vector<Column> cols;
    for (const auto& n : names) cols.push_back({n, ColumnKind::kNumeric, n, ""});
    return FeatureTable(std::move(ids), std::move(cols), std::move(values));
  }

  int rows() const { return static_cast<int>(ids_.size()); }
  int cols() const { return static_cast<int>(columns_.size()); }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<Column>& columns() const { return columns_; }
  const Eigen::MatrixXd& values() const { return values_; }
  const std::vector<Feature>& features() const { return features_; }

  std::optional<int> find(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  int feature_index(const std::string& name) const {
    for (std::size_t f = 0; f < features_.size(); ++f) {
      if (features_[f].name == name) return static_cast<int>(f);
    }
    throw ValidationError("unknown feature '" + name + "'");
  }

  // Keeps the given rows, in the given order.
  FeatureTable subset(const std::vector<int>& rows) const {
    std::vector<std::string> ids;
    Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size()), values_.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      ids.push_back(ids_.at(static_cast<std::size_t>(rows[r])));
      values.row(static_cast<Eigen::Index>(r)) = values_.row(rows[r]);
    }
    return FeatureTable(std::move(ids), columns_, std::move(values));
  }

  FeatureTable with_values(Eigen::MatrixXd values) const {
    return FeatureTable(ids_, columns_, std::move(values));
  }

  bool operator==(const FeatureTable& o) const {
    return ids_ == o.ids_ && columns_ == o.columns_ && values_.rows() == o.values_.rows() &&
           values_.cols() == o.values_.cols() && values_ == o.values_;
  }

 private:
  void rebuild_features() {
    features_.clear();
    for (int c = 0; c < cols(); ++c) {
      const Column& col = columns_[static_cast<std::size_t>(c)];
      if (features_.empty() || features_.back().name != col.source || col.kind == ColumnKind::kNumeric) {
        features_.push_back({col.source, col.kind, {}, {}});
      }
      features_.back().columns.push_back(c);
      if (col.kind == ColumnKind::kCategorical) features_.back().levels.push_back(col.level);
    }
  }

  std::vector<std::string> ids_;
  std::vector<Column> columns_;
  Eigen::MatrixXd values_;
  std::unordered_map<std::string, int> index_;
  std::vector<Feature> features_;
};

// Reads a header-bearing comma-delimited table whose first column holds the
// entity id. Declared columns are taken in declaration order; undeclared file
// columns are ignored. An empty schema declares every column numeric.
inline FeatureTable read_feature_table(std::istream& in, Schema schema, const std::string& label = "<stream>") {
  std::string line;
  if (!csv::getline(in, line)) throw ParseError(label + ": empty file");
  const auto header = csv::split(line);
  if (header.size() < 1) throw ParseError(label + ": missing header");
  std::map<std::string, int> position;
  for (std::size_t c = 1; c < header.size(); ++c) position[header[c]] = static_cast<int>(c);
  if (schema.empty()) {
    for (std::size_t c = 1; c < header.size(); ++c) schema.push_back({header[c], ColumnKind::kNumeric});
  }
  std::set<std::string> declared;
  for (const auto& decl : schema) {
    if (!declared.insert(decl.name).second) throw SchemaError(label + ": column '" + decl.name + "' declared twice");
    if (!position.count(decl.name)) throw SchemaError(label + ": missing column '" + decl.name + "'");
  }

  std::vector<std::string> ids;
  std::vector<std::vector<std::string>> raw;
  std::set<std::string> seen;
  int row = 0;
  while (csv::getline(in, line)) {
    auto fields = csv::split(line);
    if (fields.size() != header.size()) {
      throw ParseError(label + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(header.size()));
    }
    if (fields[0].empty()) throw ParseError(label + ": row " + std::to_string(row) + " has an empty id");
    if (!seen.insert(fields[0]).second) throw ValidationError(label + ": duplicate id '" + fields[0] + "'");
    ids.push_back(fields[0]);
    raw.push_back(std::move(fields));
    ++row;
  }

  std::vector<Column> columns;
  std::vector<std::pair<int, std::string>> sources;  // (file position, level or "")
  for (const auto& decl : schema) {
    const int pos = position.at(decl.name);
    if (decl.kind == ColumnKind::kNumeric) {
      columns.push_back({decl.name, ColumnKind::kNumeric, decl.name, ""});
      sources.emplace_back(pos, "");
    } else {
      std::set<std::string> levels;
      for (std::size_t r = 0; r < raw.size(); ++r) {
        const auto& v = raw[r][static_cast<std::size_t>(pos)];
        if (v.empty()) throw ParseError(label + ": row " + std::to_string(r) + " has a missing value in '" + decl.name + "'");
        levels.insert(v);
      }
      for (const auto& lv : levels) {
        columns.push_back({decl.name + "=" + lv, ColumnKind::kCategorical, decl.name, lv});
        sources.emplace_back(pos, lv);
      }
    }
  }

  Eigen::MatrixXd values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(raw.size()),
                                                 static_cast<Eigen::Index>(columns.size()));
  for (std::size_t r = 0; r < raw.size(); ++r) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto& [pos, level] = sources[c];
      const auto& cell = raw[r][static_cast<std::size_t>(pos)];
      if (columns[c].kind == ColumnKind::kCategorical) {
        values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = cell == level ? 1.0 : 0.0;
      } else {
        const auto v = csv::parse_double(cell);
        if (!v) {
          throw ParseError(label + ": row " + std::to_string(r) + ": non-numeric value '" + cell + "' in column '" +
                           columns[c].name + "'");
        }
        values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *v;
      }
    }
  }
  return FeatureTable(std::move(ids), std::move(columns), std::move(values));
}

inline FeatureTable load_feature_table(const std::string& path, const Schema& schema) {
  auto in = csv::open_in(path);
  return read_feature_table(in, schema, path);
}

inline Schema schema_of(const FeatureTable& table) {
  Schema schema;
  for (const auto& f : table.features()) schema.push_back({f.name, f.kind});
  return schema;
}

// Writes the table in its declared (pre-expansion) form, so that reading it
// back with schema_of(table) reproduces it.
inline void write_feature_table(std::ostream& out, const FeatureTable& table, const std::string& id_header = "id") {
  out << id_header;
  for (const auto& f : table.features()) out << ',' << csv::quote_if_needed(f.name);
  out << '\n';
  for (int r = 0; r < table.rows(); ++r) {
    out << csv::quote_if_needed(table.ids()[static_cast<std::size_t>(r)]);
    for (const auto& f : table.features()) {
      out << ',';
      if (f.kind == ColumnKind::kNumeric) {
        out << csv::format_double(table.values()(r, f.columns[0]));
      } else {
        for (std::size_t l = 0; l < f.columns.size(); ++l) {
          if (table.values()(r, f.columns[l]) == 1.0) out << csv::quote_if_needed(f.levels[l]);
        }
      }
    }
    out << '\n';
  }
}

inline void save_feature_table(const std::string& path, const FeatureTable& table, const std::string& id_header = "id") {
  auto out = csv::open_out(path);
  write_feature_table(out, table, id_header);
}

// ---------------------------------------------------------------------------
// Scaling

struct ColumnRange {
  std::string column;
  double min = 0.0;
  double max = 0.0;
};

// Per numeric column (min, max) learned on a reference table. Transforming new
// rows clamps to [0, 1].
struct ScalingParams {
  std::vector<ColumnRange> ranges;

  double transform(const ColumnRange& r, double v) const {
    if (!(r.max > r.min)) return 0.0;
    return std::clamp((v - r.min) / (r.max - r.min), 0.0, 1.0);
  }

  const ColumnRange* find(const std::string& column) const {
    for (const auto& r : ranges) {
      if (r.column == column) return &r;
    }
    return nullptr;
  }

  // Scales one raw row laid out like `table`'s columns.
  Eigen::RowVectorXd transform_row(const FeatureTable& layout, const Eigen::RowVectorXd& raw) const {
    if (raw.size() != layout.cols()) {
      throw ValidationError("feature row has " + std::to_string(raw.size()) + " values, expected " +
                            std::to_string(layout.cols()));
    }
    Eigen::RowVectorXd out = raw;
    for (int c = 0; c < layout.cols(); ++c) {
      const auto& col = layout.columns()[static_cast<std::size_t>(c)];
      if (col.kind != ColumnKind::kNumeric) continue;
      const ColumnRange* r = find(col.name);
      if (r == nullptr) throw ValidationError("no scaling range for column '" + col.name + "'");
      out(c) = transform(*r, raw(c));
    }
    return out;
  }

  FeatureTable transform(const FeatureTable& table) const {
    Eigen::MatrixXd values = table.values();
    for (int r = 0; r < table.rows(); ++r) values.row(r) = transform_row(table, table.values().row(r));
    return table.with_values(std::move(values));
  }
};

// Min-max scales every numeric column of `table` using its own rows.
// Constant columns map to 0.
inline std::pair<FeatureTable, ScalingParams> scale_features(const FeatureTable& table) {
  if (table.rows() == 0) throw ValidationError("cannot scale an empty feature table");
  ScalingParams params;
  Eigen::MatrixXd values = table.values();
  for (int c = 0; c < table.cols(); ++c) {
    const auto& col = table.columns()[static_cast<std::size_t>(c)];
    if (col.kind != ColumnKind::kNumeric) continue;
    const double lo = values.col(c).minCoeff();
    const double hi = values.col(c).maxCoeff();
    params.ranges.push_back({col.name, lo, hi});
    for (int r = 0; r < table.rows(); ++r) {
      values(r, c) = hi > lo ? (values(r, c) - lo) / (hi - lo) : 0.0;
    }
  }
  return {table.with_values(std::move(values)), std::move(params)};
}

// ---------------------------------------------------------------------------
// Observations

enum class Task { kRegression, kClassification };

inline std::string_view to_string(Task task) {
  return task == Task::kRegression ? "regression" : "classification";
}

inline Task parse_task(std::string_view s) {
  if (s == "regression") return Task::kRegression;
  if (s == "classification") return Task::kClassification;
  throw ValidationError("unknown task '" + std::string(s) + "'");
}

struct Triple {
  int user = 0;
  int item = 0;
  double response = 0.0;

  bool operator==(const Triple&) const = default;
};

struct ObservationSet {
  std::vector<Triple> triples;
  Task task = Task::kRegression;
  int m = 0;
  int n = 0;

  std::size_t size() const { return triples.size(); }
  bool empty() const { return triples.empty(); }

  Eigen::VectorXd responses() const {
    Eigen::VectorXd y(static_cast<Eigen::Index>(triples.size()));
    for (std::size_t k = 0; k < triples.size(); ++k) y(static_cast<Eigen::Index>(k)) = triples[k].response;
    return y;
  }

  ObservationSet with_triples(std::vector<Triple> t) const { return {std::move(t), task, m, n}; }

  void validate() const {
    if (m < 0 || n < 0) throw ValidationError("negative matrix dimensions");
    std::set<std::pair<int, int>> seen;
    for (std::size_t k = 0; k < triples.size(); ++k) {
      const auto& t = triples[k];
      if (t.user < 0 || t.user >= m || t.item < 0 || t.item >= n) {
        throw ValidationError("observation " + std::to_string(k) + " index (" + std::to_string(t.user) + ", " +
                              std::to_string(t.item) + ") outside " + std::to_string(m) + "x" + std::to_string(n));
      }
      if (!std::isfinite(t.response)) throw ValidationError("observation " + std::to_string(k) + " is not finite");
      if (task == Task::kClassification && t.response != 0.0 && t.response != 1.0) {
        throw ValidationError("observation " + std::to_string(k) + ": classification response must be 0 or 1");
      }
      if (!seen.emplace(t.user, t.item).second) {
        throw ValidationError("duplicate response for pair (" + std::to_string(t.user) + ", " +
                              std::to_string(t.item) + ")");
      }
    }
  }
};

// Reads `user_id,item_id,response` rows, resolving ids against the tables.
inline ObservationSet read_observations(std::istream& in, const FeatureTable& users, const FeatureTable& items,
                                        Task task, const std::string& label = "<stream>") {
  std::string line;
  if (!csv::getline(in, line)) throw ParseError(label + ": empty file");
  if (csv::split(line).size() != 3) throw ParseError(label + ": expected header user_id,item_id,response");
  ObservationSet obs{{}, task, users.rows(), items.rows()};
  int row = 0;
  while (csv::getline(in, line)) {
    const auto f = csv::split(line);
    if (f.size() != 3) throw ParseError(label + ": row " + std::to_string(row) + " does not have 3 fields");
    const auto u = users.find(f[0]);
    const auto i = items.find(f[1]);
    if (!u) throw ValidationError(label + ": row " + std::to_string(row) + ": unknown user id '" + f[0] + "'");
    if (!i) throw ValidationError(label + ": row " + std::to_string(row) + ": unknown item id '" + f[1] + "'");
    const auto y = csv::parse_double(f[2]);
    if (!y) throw ParseError(label + ": row " + std::to_string(row) + ": non-numeric response '" + f[2] + "'");
    obs.triples.push_back({*u, *i, *y});
    ++row;
  }
  obs.validate();
  return obs;
}

inline ObservationSet load_observations(const std::string& path, const FeatureTable& users,
                                        const FeatureTable& items, Task task) {
  auto in = csv::open_in(path);
  return read_observations(in, users, items, task, path);
}

inline void write_observations(std::ostream& out, const ObservationSet& obs, const FeatureTable& users,
                               const FeatureTable& items) {
  out << "user_id,item_id,response\n";
  for (const auto& t : obs.triples) {
    out << csv::quote_if_needed(users.ids()[static_cast<std::size_t>(t.user)]) << ','
        << csv::quote_if_needed(items.ids()[static_cast<std::size_t>(t.item)]) << ','
        << csv::format_double(t.response) << '\n';
  }
}

inline void save_observations(const std::string& path, const ObservationSet& obs, const FeatureTable& users,
                              const FeatureTable& items) {
  auto out = csv::open_out(path);
  write_observations(out, obs, users, items);
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct DataSplit {
  ObservationSet train;
  ObservationSet validation;
  ObservationSet test;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<std::size_t> shuffled_indices(std::size_t count, std::uint64_t seed, std::string_view stream) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = make_rng(seed, stream);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

}  // namespace detail

// Uniform random partition of `obs`; deterministic for a fixed seed.
inline DataSplit split_observations(const ObservationSet& obs, SplitRatios ratios, std::uint64_t seed) {
  if (!(ratios.train > 0.0) || !(ratios.validation > 0.0) || !(ratios.test > 0.0)) {
    throw ValidationError("split ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }
  const std::size_t total = obs.size();
  const auto order = detail::shuffled_indices(total, seed, "split");
  const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(total)));
  const auto n_val = std::min(total - std::min(total, n_train),
                              static_cast<std::size_t>(std::llround(ratios.validation * static_cast<double>(total))));
  DataSplit split{obs.with_triples({}), obs.with_triples({}), obs.with_triples({}), seed};
  for (std::size_t k = 0; k < total; ++k) {
    const Triple& t = obs.triples[order[k]];
    if (k < n_train) {
      split.train.triples.push_back(t);
    } else if (k < n_train + n_val) {
      split.validation.triples.push_back(t);
    } else {
      split.test.triples.push_back(t);
    }
  }
  return split;
}

// Index partition used for the early-stopping holdout inside a training set.
// Returns (fit indices, holdout indices); the holdout is empty when the set is
// too small to spare a sample.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> holdout_indices(std::size_t count, double fraction,
                                                                                       std::uint64_t seed) {
  auto order = detail::shuffled_indices(count, seed, "holdout");
  auto n_hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(count)));
  if (count < 2) n_hold = 0;
  n_hold = std::min(n_hold, count - std::min<std::size_t>(count, 1));
  std::vector<std::size_t> hold(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(n_hold), order.end());
  return {std::move(fit), std::move(hold)};
}

}  // namespace gammli

#endif  // GAMMLI_DATA_HPP_
