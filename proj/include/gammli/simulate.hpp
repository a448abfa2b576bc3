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

#ifndef GAMMLI_SIMULATE_HPP_
#define GAMMLI_SIMULATE_HPP_

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gammli/data.hpp"
#include "gammli/error.hpp"
#include "gammli/random.hpp"

namespace gammli {

struct SimulationConfig {
  int m = 1000;
  int n = 1000;
  int features = 5;
  int rank = 3;
  int user_groups = 10;
  int item_groups = 10;
  double missing_rate = 0.9;
  bool noise = true;
  Task task = Task::kRegression;
  std::uint64_t seed = 0;
  double cold_start_fraction = 0.0;

  void validate() const {
    if (m <= 0 || n <= 0) throw ValidationError("m and n must be positive");
    if (features < 3) throw ValidationError("the generator needs at least 3 features per side");
    if (rank < 1) throw ValidationError("rank must be positive");
    if (user_groups < 1 || item_groups < 1 || user_groups > m || item_groups > n) {
      throw ValidationError("group counts must lie in [1, entity count]");
    }
    if (!(missing_rate >= 0.0 && missing_rate < 1.0)) throw ValidationError("missing_rate must lie in [0, 1)");
    if (!(cold_start_fraction >= 0.0 && cold_start_fraction < 1.0)) {
      throw ValidationError("cold_start_fraction must lie in [0, 1)");
    }
  }
};

// Additive components of each observed response, aligned with the triples.
struct GroundTruth {
  Eigen::VectorXd x1;         // 5 x1
  Eigen::VectorXd z1;         // 5 z1^2
  Eigen::VectorXd exp_term;   // 0.5 exp(-4 (z2 + x3) + 4)
  Eigen::VectorXd sin_term;   // 5 sin(2 pi x2 z3)
  Eigen::VectorXd latent;     // 3 u.v
  Eigen::VectorXd noise;
  Eigen::VectorXd continuous;  // sum of all of the above

  Eigen::VectorXd noiseless() const { return x1 + z1 + exp_term + sin_term + latent; }
};

struct SyntheticDataset {
  FeatureTable users;
  FeatureTable items;
  ObservationSet observations;
  GroundTruth truth;
  Eigen::MatrixXd user_latent;  // m x rank, in [-1, 1]
  Eigen::MatrixXd item_latent;
  std::vector<int> user_groups;
  std::vector<int> item_groups;
};

// The noiseless response for one (user, item) pair; rows are scaled features.
inline double simulation_signal(const Eigen::Ref<const Eigen::RowVectorXd>& x, const Eigen::Ref<const Eigen::RowVectorXd>& z,
                                const Eigen::Ref<const Eigen::RowVectorXd>& u, const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  return 5.0 * x(0) + 5.0 * z(0) * z(0) + 0.5 * std::exp(-4.0 * (z(1) + x(2)) + 4.0) +
         5.0 * std::sin(2.0 * std::numbers::pi * x(1) * z(2)) + 3.0 * u.dot(v);
}

namespace detail {

// Gaussian blobs (sd 1) around centers uniform in [0, 10]^dims with balanced,
// shuffled group sizes.
inline Eigen::MatrixXd blobs(int count, int dims, int groups, Rng& rng, std::vector<int>& membership) {
  std::uniform_real_distribution<double> box(0.0, 10.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd centers(groups, dims);
  for (int g = 0; g < groups; ++g)
    for (int d = 0; d < dims; ++d) centers(g, d) = box(rng);
  membership.resize(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) membership[static_cast<std::size_t>(i)] = i % groups;
  std::shuffle(membership.begin(), membership.end(), rng);
  Eigen::MatrixXd points(count, dims);
  for (int i = 0; i < count; ++i)
    for (int d = 0; d < dims; ++d) points(i, d) = centers(membership[static_cast<std::size_t>(i)], d) + gauss(rng);
  return points;
}

inline void rescale_columns(Eigen::Ref<Eigen::MatrixXd> m, double lo, double hi) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double a = m.col(c).minCoeff();
    const double b = m.col(c).maxCoeff();
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = b > a ? lo + (hi - lo) * (m(r, c) - a) / (b - a) : lo;
  }
}

inline FeatureTable entity_table(const std::string& id_prefix, const std::string& feature_prefix,
                                 const Eigen::MatrixXd& values) {
  std::vector<std::string> ids, names;
  for (Eigen::Index r = 0; r < values.rows(); ++r) ids.push_back(id_prefix + std::to_string(r));
  for (Eigen::Index c = 0; c < values.cols(); ++c) names.push_back(feature_prefix + std::to_string(c + 1));
  return FeatureTable::numeric(std::move(ids), names, values);
}

}  // namespace detail

// Users carry features x1..xp and latent vectors u drawn jointly from one set
// of blobs (so feature groups and latent groups coincide); items likewise
// with z and v.
inline SyntheticDataset generate(const SimulationConfig& config) {
  config.validate();
  SyntheticDataset ds;
  const int p = config.features;
  const int r = config.rank;

  Rng user_rng = make_rng(config.seed, "sim/users");
  Eigen::MatrixXd u_all = detail::blobs(config.m, p + r, config.user_groups, user_rng, ds.user_groups);
  Rng item_rng = make_rng(config.seed, "sim/items");
  Eigen::MatrixXd i_all = detail::blobs(config.n, p + r, config.item_groups, item_rng, ds.item_groups);

  detail::rescale_columns(u_all.leftCols(p), 0.0, 1.0);
  detail::rescale_columns(u_all.rightCols(r), -1.0, 1.0);
  detail::rescale_columns(i_all.leftCols(p), 0.0, 1.0);
  detail::rescale_columns(i_all.rightCols(r), -1.0, 1.0);
  const Eigen::MatrixXd x = u_all.leftCols(p);
  const Eigen::MatrixXd z = i_all.leftCols(p);
  ds.user_latent = u_all.rightCols(r);
  ds.item_latent = i_all.rightCols(r);
  ds.users = detail::entity_table("u", "x", x);
  ds.items = detail::entity_table("i", "z", z);

  Rng mask_rng = make_rng(config.seed, "sim/mask");
  Rng noise_rng = make_rng(config.seed, "sim/noise");
  std::bernoulli_distribution keep(1.0 - config.missing_rate);
  std::normal_distribution<double> gauss(0.0, 1.0);

  ds.observations = ObservationSet{{}, config.task, config.m, config.n};
  std::vector<double> c_x1, c_z1, c_exp, c_sin, c_lat, c_noise;
  for (int i = 0; i < config.m; ++i) {
    for (int j = 0; j < config.n; ++j) {
      if (!keep(mask_rng)) continue;
      c_x1.push_back(5.0 * x(i, 0));
      c_z1.push_back(5.0 * z(j, 0) * z(j, 0));
      c_exp.push_back(0.5 * std::exp(-4.0 * (z(j, 1) + x(i, 2)) + 4.0));
      c_sin.push_back(5.0 * std::sin(2.0 * std::numbers::pi * x(i, 1) * z(j, 2)));
      c_lat.push_back(3.0 * ds.user_latent.row(i).dot(ds.item_latent.row(j)));
      c_noise.push_back(config.noise ? gauss(noise_rng) : 0.0);
      ds.observations.triples.push_back({i, j, 0.0});
    }
  }
  auto vec = [](const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
  };
  ds.truth.x1 = vec(c_x1);
  ds.truth.z1 = vec(c_z1);
  ds.truth.exp_term = vec(c_exp);
  ds.truth.sin_term = vec(c_sin);
  ds.truth.latent = vec(c_lat);
  ds.truth.noise = vec(c_noise);
  ds.truth.continuous = ds.truth.noiseless() + ds.truth.noise;
  for (std::size_t k = 0; k < ds.observations.triples.size(); ++k) {
    const double y = ds.truth.continuous(static_cast<Eigen::Index>(k));
    ds.observations.triples[k].response = config.task == Task::kRegression ? y : (y > 0.5 ? 1.0 : 0.0);
  }
  return ds;
}

struct ColdStartSplit {
  ObservationSet train;  // pairs whose user and item are both kept
  ObservationSet cold;   // pairs touching a held-out user or item
  std::vector<int> cold_users;
  std::vector<int> cold_items;
};

// Holds out max(1, round(fraction * m)) users and likewise items.
inline ColdStartSplit cold_start_split(const ObservationSet& obs, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("cold-start fraction must lie in (0, 1)");
  auto count = [fraction](int total) {
    return std::max<long long>(1, std::llround(fraction * static_cast<double>(total)));
  };
  const auto hu = count(obs.m);
  const auto hi = count(obs.n);
  if (hu >= obs.m || hi >= obs.n) throw ValidationError("cold-start fraction leaves no training users or items");
  ColdStartSplit out{obs.with_triples({}), obs.with_triples({}), {}, {}};
  auto pick = [seed](int total, long long k, std::string_view stream) {
    auto order = detail::shuffled_indices(static_cast<std::size_t>(total), seed, stream);
    std::vector<int> held(order.begin(), order.begin() + k);
    std::sort(held.begin(), held.end());
    return std::vector<int>(held.begin(), held.end());
  };
  out.cold_users = pick(obs.m, hu, "cold/users");
  out.cold_items = pick(obs.n, hi, "cold/items");
  std::vector<char> cu(static_cast<std::size_t>(obs.m), 0), ci(static_cast<std::size_t>(obs.n), 0);
  for (int u : out.cold_users) cu[static_cast<std::size_t>(u)] = 1;
  for (int i : out.cold_items) ci[static_cast<std::size_t>(i)] = 1;
  for (const auto& t : obs.triples) {
    const bool cold = cu[static_cast<std::size_t>(t.user)] || ci[static_cast<std::size_t>(t.item)];
    (cold ? out.cold : out.train).triples.push_back(t);
  }
  return out;
}

inline void write_ground_truth(std::ostream& out, const SyntheticDataset& ds) {
  out << "user_id,item_id,main_x1,main_z1,pair_x3_z2,pair_x2_z3,latent,noise,continuous\n";
  for (std::size_t k = 0; k < ds.observations.triples.size(); ++k) {
    const auto& t = ds.observations.triples[k];
    const auto e = static_cast<Eigen::Index>(k);
    out << ds.users.ids()[static_cast<std::size_t>(t.user)] << ',' << ds.items.ids()[static_cast<std::size_t>(t.item)];
    for (const Eigen::VectorXd* v : {&ds.truth.x1, &ds.truth.z1, &ds.truth.exp_term, &ds.truth.sin_term,
                                     &ds.truth.latent, &ds.truth.noise, &ds.truth.continuous}) {
      out << ',' << csv::format_double((*v)(e));
    }
    out << '\n';
  }
}

// Writes users.csv, items.csv, obs.csv and ground_truth.csv into `dir`.
inline void save_dataset(const std::string& dir, const SyntheticDataset& ds) {
  save_feature_table(dir + "/users.csv", ds.users, "user_id");
  save_feature_table(dir + "/items.csv", ds.items, "item_id");
  save_observations(dir + "/obs.csv", ds.observations, ds.users, ds.items);
  auto out = csv::open_out(dir + "/ground_truth.csv");
  write_ground_truth(out, ds);
}

}  // namespace gammli

#endif  // GAMMLI_SIMULATE_HPP_
