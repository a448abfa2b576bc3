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

#ifndef GAMMLI_BASELINE_HPP_
#define GAMMLI_BASELINE_HPP_

#include <limits>
#include <vector>

#include "gammli/data.hpp"
#include "gammli/kmeans.hpp"
#include "gammli/latent.hpp"

namespace gammli {

struct BaselineOptions {
  int rank = 5;
  std::vector<double> lambdas{0.1, 1.0, 10.0};
  std::uint64_t seed = 0;
  int max_iterations = 100;
  double tolerance = 1e-4;
};

// Rank-r soft-impute ALS on globally centered responses. Users or items
// without training responses fall back to the global mean.
struct BaselineModel {
  double mean = 0.0;
  double lambda = 0.0;
  std::vector<int> user_slot;  // entity -> factor row, or -1
  std::vector<int> item_slot;
  LatentFactors factors;

  double predict(int user, int item) const {
    const int a = user_slot.at(static_cast<std::size_t>(user));
    const int b = item_slot.at(static_cast<std::size_t>(item));
    if (a < 0 || b < 0) return mean;
    return mean + factors.predict(a, b);
  }

  Eigen::VectorXd predict(const std::vector<Triple>& triples) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(triples.size()));
    for (std::size_t k = 0; k < triples.size(); ++k) out(static_cast<Eigen::Index>(k)) = predict(triples[k].user, triples[k].item);
    return out;
  }
};

namespace detail {

inline BaselineModel fit_baseline_once(const ObservationSet& train, double lambda, const BaselineOptions& opt) {
  BaselineModel b;
  b.lambda = lambda;
  b.mean = train.responses().mean();
  b.user_slot.assign(static_cast<std::size_t>(train.m), -1);
  b.item_slot.assign(static_cast<std::size_t>(train.n), -1);
  int rows = 0, cols = 0;
  for (const auto& t : train.triples) {
    if (b.user_slot[static_cast<std::size_t>(t.user)] < 0) b.user_slot[static_cast<std::size_t>(t.user)] = rows++;
    if (b.item_slot[static_cast<std::size_t>(t.item)] < 0) b.item_slot[static_cast<std::size_t>(t.item)] = cols++;
  }
  ResidualMatrix m{rows, cols, {}};
  for (const auto& t : train.triples) {
    m.entries.push_back({b.user_slot[static_cast<std::size_t>(t.user)], b.item_slot[static_cast<std::size_t>(t.item)],
                         t.response - b.mean});
  }
  LatentOptions lo;
  lo.rank = std::min({opt.rank, rows, cols});
  lo.lambda = lambda;
  lo.seed = derive_seed(opt.seed, "baseline");
  lo.max_iterations = opt.max_iterations;
  lo.tolerance = opt.tolerance;
  b.factors = fit_latent(m, Clustering::singletons(Eigen::MatrixXd(rows, 0)), Clustering::singletons(Eigen::MatrixXd(cols, 0)), lo);
  return b;
}

}  // namespace detail

// Fits one model per candidate lambda and keeps the one with the lowest
// validation RMSE (ties: smaller lambda). Without validation data the first
// candidate is used.
inline BaselineModel baseline_svd(const ObservationSet& train, const ObservationSet& validation,
                                  const BaselineOptions& opt = {}) {
  if (train.empty()) throw ValidationError("baseline needs training observations");
  if (opt.lambdas.empty()) throw ValidationError("baseline needs at least one lambda");
  BaselineModel best;
  double best_err = std::numeric_limits<double>::infinity();
  for (double lambda : opt.lambdas) {
    BaselineModel b = detail::fit_baseline_once(train, lambda, opt);
    if (validation.empty()) return b;
    const Eigen::VectorXd d = b.predict(validation.triples) - validation.responses();
    const double err = d.squaredNorm();
    if (err < best_err) {
      best_err = err;
      best = std::move(b);
    }
  }
  return best;
}

}  // namespace gammli

#endif  // GAMMLI_BASELINE_HPP_
