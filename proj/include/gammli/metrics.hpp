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

#ifndef GAMMLI_METRICS_HPP_
#define GAMMLI_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

#include "gammli/error.hpp"

namespace gammli {

namespace detail {

inline void check_aligned(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  if (pred.size() != truth.size()) throw ValidationError("predictions and truths differ in length");
  if (pred.size() == 0) throw ValidationError("metrics need at least one prediction");
}

}  // namespace detail

inline double rmse(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  detail::check_aligned(pred, truth);
  return std::sqrt((pred - truth).squaredNorm() / static_cast<double>(pred.size()));
}

inline double mae(const Eigen::VectorXd& pred, const Eigen::VectorXd& truth) {
  detail::check_aligned(pred, truth);
  return (pred - truth).cwiseAbs().mean();
}

// Mann-Whitney statistic with midranks for ties.
inline double auc(const Eigen::VectorXd& score, const Eigen::VectorXd& label) {
  detail::check_aligned(score, label);
  const auto n = static_cast<std::size_t>(score.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return score(static_cast<Eigen::Index>(a)) < score(static_cast<Eigen::Index>(b));
  });
  double pos_rank_sum = 0.0;
  double positives = 0.0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n && score(static_cast<Eigen::Index>(order[end])) == score(static_cast<Eigen::Index>(order[start]))) ++end;
    const double midrank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) {
      if (label(static_cast<Eigen::Index>(order[k])) > 0.5) {
        pos_rank_sum += midrank;
        positives += 1.0;
      }
    }
    start = end;
  }
  const double negatives = static_cast<double>(n) - positives;
  if (positives == 0.0 || negatives == 0.0) throw ValidationError("AUC needs both classes present");
  return (pos_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

inline double logloss(const Eigen::VectorXd& prob, const Eigen::VectorXd& label) {
  detail::check_aligned(prob, label);
  constexpr double kClip = 1e-15;
  double total = 0.0;
  for (Eigen::Index k = 0; k < prob.size(); ++k) {
    const double p = std::clamp(prob(k), kClip, 1.0 - kClip);
    total -= label(k) > 0.5 ? std::log(p) : std::log1p(-p);
  }
  return total / static_cast<double>(prob.size());
}

}  // namespace gammli

#endif  // GAMMLI_METRICS_HPP_
