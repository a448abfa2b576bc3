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

#ifndef GAMMLI_TUNER_HPP_
#define GAMMLI_TUNER_HPP_

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "gammli/model.hpp"

namespace gammli {

struct SearchSpace {
  int k_min = 2;
  int k_max = 30;
  int l_min = 2;
  int l_max = 30;
  double lambda_min = 0.0;
  double lambda_max = 50.0;
  int points = 5;
  int iterations = 5;

  void validate() const {
    if (k_min < 1 || l_min < 1) throw ValidationError("group counts must be at least 1");
    if (k_max <= k_min || l_max <= l_min || !(lambda_max > lambda_min)) throw ValidationError("search ranges must be non-degenerate");
    if (lambda_min < 0.0) throw ValidationError("lambda range must be non-negative");
    if (points < 2) throw ValidationError("at least 2 points per axis are required");
    if (iterations < 1) throw ValidationError("at least one iteration is required");
  }
};

struct Candidate {
  int k = 0;
  int l = 0;
  double lambda = 0.0;

  auto key() const { return std::make_tuple(k, l, lambda); }
  bool operator<(const Candidate& o) const { return key() < o.key(); }
  bool operator==(const Candidate& o) const { return key() == o.key(); }
};

struct TuneEntry {
  int iteration = 0;
  Candidate candidate;
  double loss = std::numeric_limits<double>::quiet_NaN();
  std::string status;  // "ok", "cached" (seen in an earlier iteration) or "failed: <reason>"
};

struct TuneResult {
  Candidate best;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<TuneEntry> trace;
  std::vector<double> best_by_iteration;  // incumbent loss after each iteration
  std::vector<double> span_k, span_l, span_lambda;  // unclamped spans used per iteration

  int evaluations() const {
    int n = 0;
    for (const auto& e : trace) n += e.status != "cached";
    return n;
  }
};

namespace detail {

// `points` evenly spaced nodes spanning `span` around `center`, each clamped.
inline std::vector<double> axis_nodes(double center, double span, double lo, double hi, int points) {
  std::vector<double> out;
  const double mid = 0.5 * static_cast<double>(points - 1);
  for (int t = 0; t < points; ++t) {
    out.push_back(std::clamp(center + (static_cast<double>(t) - mid) * span / static_cast<double>(points - 1), lo, hi));
  }
  return out;
}

inline std::vector<int> integer_nodes(const std::vector<double>& nodes) {
  std::vector<int> out;
  for (double v : nodes) out.push_back(static_cast<int>(std::lround(v)));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline bool better(double loss, const Candidate& c, double best_loss, const Candidate& best) {
  if (loss != best_loss) return loss < best_loss;
  return c < best;
}

}  // namespace detail

using CandidateLoss = std::function<double(const Candidate&)>;

// Coarse-to-fine grid search: each iteration scores the points^3 grid (K and
// L snapped to integers and deduplicated), then recenters every axis on the
// incumbent and halves its span. Exceptions thrown by `evaluate` mark the
// candidate failed.
inline TuneResult coarse_to_fine_search(const CandidateLoss& evaluate, const SearchSpace& space) {
  space.validate();
  TuneResult r;
  std::map<Candidate, double> seen;  // NaN for failures
  double ck = 0.5 * (space.k_min + space.k_max), sk = space.k_max - space.k_min;
  double cl = 0.5 * (space.l_min + space.l_max), sl = space.l_max - space.l_min;
  double cm = 0.5 * (space.lambda_min + space.lambda_max), sm = space.lambda_max - space.lambda_min;
  bool have_best = false;

  for (int it = 0; it < space.iterations; ++it) {
    r.span_k.push_back(sk);
    r.span_l.push_back(sl);
    r.span_lambda.push_back(sm);
    const auto ks = detail::integer_nodes(detail::axis_nodes(ck, sk, space.k_min, space.k_max, space.points));
    const auto ls = detail::integer_nodes(detail::axis_nodes(cl, sl, space.l_min, space.l_max, space.points));
    auto ms = detail::axis_nodes(cm, sm, space.lambda_min, space.lambda_max, space.points);
    std::sort(ms.begin(), ms.end());
    ms.erase(std::unique(ms.begin(), ms.end()), ms.end());

    for (int k : ks)
      for (int l : ls)
        for (double lam : ms) {
          const Candidate c{k, l, lam};
          TuneEntry e{it, c, 0.0, "ok"};
          if (const auto hit = seen.find(c); hit != seen.end()) {
            e.loss = hit->second;
            e.status = "cached";
          } else {
            try {
              e.loss = evaluate(c);
              if (!std::isfinite(e.loss)) throw TrainingError("non-finite validation loss");
            } catch (const std::exception& ex) {
              e.loss = std::numeric_limits<double>::quiet_NaN();
              e.status = std::string("failed: ") + ex.what();
            }
            seen.emplace(c, e.loss);
          }
          if (std::isfinite(e.loss) && (!have_best || detail::better(e.loss, c, r.best_loss, r.best))) {
            r.best = c;
            r.best_loss = e.loss;
            have_best = true;
          }
          r.trace.push_back(std::move(e));
        }
    r.best_by_iteration.push_back(r.best_loss);
    if (!have_best) continue;
    ck = r.best.k;
    cl = r.best.l;
    cm = r.best.lambda;
    sk *= 0.5;
    sl *= 0.5;
    sm *= 0.5;
  }
  if (!have_best) throw TrainingError("every tuning candidate failed");
  return r;
}

// Tunes (K, L, lambda) on a stage 1-2 fit by the global validation loss of
// the full model. Clusterings are computed once per group count.
inline TuneResult tune(const AdditiveFit& a, const SearchSpace& space) {
  std::map<int, Clustering> users, items;
  auto clustering = [&](std::map<int, Clustering>& cache, Side side, int k) -> const Clustering& {
    auto it = cache.find(k);
    if (it == cache.end()) it = cache.emplace(k, cluster_side(a, side, k)).first;
    return it->second;
  };
  return coarse_to_fine_search(
      [&](const Candidate& c) {
        const Clustering& u = clustering(users, Side::kUser, c.k);
        const Clustering& i = clustering(items, Side::kItem, c.l);
        return latent_validation_loss(a, fit_latent_stage(a, c.k, c.l, c.lambda, &u, &i));
      },
      space);
}

inline void write_tune_trace(std::ostream& out, const TuneResult& r) {
  out << "iteration,K,L,lambda,val_loss,status\n";
  for (const auto& e : r.trace) {
    out << e.iteration << ',' << e.candidate.k << ',' << e.candidate.l << ',' << csv::format_double(e.candidate.lambda)
        << ',' << (std::isfinite(e.loss) ? csv::format_double(e.loss) : std::string("nan")) << ','
        << csv::quote_if_needed(e.status) << '\n';
  }
}

}  // namespace gammli

#endif  // GAMMLI_TUNER_HPP_
