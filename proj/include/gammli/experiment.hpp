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

#ifndef GAMMLI_EXPERIMENT_HPP_
#define GAMMLI_EXPERIMENT_HPP_

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gammli/baseline.hpp"
#include "gammli/explain.hpp"
#include "gammli/metrics.hpp"
#include "gammli/model.hpp"
#include "gammli/model_io.hpp"
#include "gammli/simulate.hpp"
#include "gammli/tuner.hpp"

namespace gammli {

// Flat `key = value` settings; '#' starts a comment.
class Settings {
 public:
  static Settings parse(std::istream& in, const std::string& label = "<config>") {
    Settings s;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto body = csv::trim(line);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) throw ParseError(label + ": line " + std::to_string(number) + " is not key=value");
      s.set(std::string(csv::trim(body.substr(0, eq))), std::string(csv::trim(body.substr(eq + 1))));
    }
    return s;
  }

  static Settings load(const std::string& path) {
    auto in = csv::open_in(path);
    return parse(in, path);
  }

  void set(const std::string& key, const std::string& value) {
    if (key.empty()) throw ParseError("empty setting name");
    values_[key] = value;
  }

  // "key=value" override as given on a command line.
  void set_assignment(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("expected key=value, got '" + kv + "'");
    set(std::string(csv::trim(std::string_view(kv).substr(0, eq))), std::string(csv::trim(std::string_view(kv).substr(eq + 1))));
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string str(const std::string& key, const std::string& fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double num(const std::string& key, double fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto v = csv::parse_double(it->second);
    if (!v) throw ValidationError("setting '" + key + "' must be a number, got '" + it->second + "'");
    return *v;
  }

  long long integer(const std::string& key, long long fallback) const {
    const double v = num(key, static_cast<double>(fallback));
    if (v != std::floor(v)) throw ValidationError("setting '" + key + "' must be an integer");
    return static_cast<long long>(v);
  }

  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      if (it->second.empty() || !std::isdigit(static_cast<unsigned char>(it->second.front()))) {
        throw std::invalid_argument("not a digit");
      }
      std::size_t pos = 0;
      const auto v = std::stoull(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ValidationError("setting '" + key + "' must be a non-negative integer");
    }
  }

  bool flag(const std::string& key, bool fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1" || it->second == "yes") return true;
    if (it->second == "false" || it->second == "0" || it->second == "no") return false;
    throw ValidationError("setting '" + key + "' must be true or false");
  }

  // Throws on any key never read; call after all lookups.
  void check_unused() const {
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) throw ValidationError("unknown setting '" + k + "'");
    }
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

inline Schema parse_schema(const std::string& text) {
  // "name:numeric,other:categorical"; empty means every column numeric.
  Schema schema;
  if (text.empty()) return schema;
  for (const auto& part : csv::split(text)) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) {
      schema.push_back({part, ColumnKind::kNumeric});
    } else {
      schema.push_back({part.substr(0, colon), parse_column_kind(part.substr(colon + 1))});
    }
  }
  return schema;
}

inline FitConfig fit_config_from(const Settings& s) {
  FitConfig c;
  c.train.learning_rate = s.num("learning_rate", c.train.learning_rate);
  c.train.max_epochs = static_cast<int>(s.integer("max_epochs", c.train.max_epochs));
  c.train.fine_tune_epochs = static_cast<int>(s.integer("fine_tune_epochs", c.train.fine_tune_epochs));
  c.train.batch_size = static_cast<int>(s.integer("batch_size", c.train.batch_size));
  c.train.patience_epochs = static_cast<int>(s.integer("patience_epochs", c.train.patience_epochs));
  c.train.validation_fraction = s.num("early_stopping_fraction", c.train.validation_fraction);
  c.user_groups = static_cast<int>(s.integer("user_groups", c.user_groups));
  c.item_groups = static_cast<int>(s.integer("item_groups", c.item_groups));
  c.lambda = s.num("lambda", c.lambda);
  c.rank = static_cast<int>(s.integer("rank", c.rank));
  c.latent_max_iterations = static_cast<int>(s.integer("latent_max_iterations", c.latent_max_iterations));
  c.latent_tolerance = s.num("latent_tolerance", c.latent_tolerance);
  c.kmeans.restarts = static_cast<int>(s.integer("kmeans_restarts", c.kmeans.restarts));
  return c;
}

inline SearchSpace search_space_from(const Settings& s) {
  SearchSpace sp;
  sp.k_min = static_cast<int>(s.integer("tune_k_min", sp.k_min));
  sp.k_max = static_cast<int>(s.integer("tune_k_max", sp.k_max));
  sp.l_min = static_cast<int>(s.integer("tune_l_min", sp.l_min));
  sp.l_max = static_cast<int>(s.integer("tune_l_max", sp.l_max));
  sp.lambda_min = s.num("tune_lambda_min", sp.lambda_min);
  sp.lambda_max = s.num("tune_lambda_max", sp.lambda_max);
  sp.points = static_cast<int>(s.integer("tune_points", sp.points));
  sp.iterations = static_cast<int>(s.integer("tune_iterations", sp.iterations));
  return sp;
}

inline SimulationConfig simulation_config_from(const Settings& s, std::uint64_t seed) {
  SimulationConfig c;
  c.m = static_cast<int>(s.integer("sim_users", c.m));
  c.n = static_cast<int>(s.integer("sim_items", c.n));
  c.features = static_cast<int>(s.integer("sim_features", c.features));
  c.rank = static_cast<int>(s.integer("sim_rank", c.rank));
  c.user_groups = static_cast<int>(s.integer("sim_user_groups", c.user_groups));
  c.item_groups = static_cast<int>(s.integer("sim_item_groups", c.item_groups));
  c.missing_rate = s.num("sim_missing_rate", c.missing_rate);
  c.noise = s.flag("sim_noise", c.noise);
  c.seed = s.seed("sim_seed", seed);
  return c;
}

// A loaded or generated dataset in raw (unscaled) feature space.
struct ExperimentData {
  FeatureTable users;
  FeatureTable items;
  ObservationSet observations;
};

inline ExperimentData experiment_data(const Settings& s, std::uint64_t seed) {
  const Task task = parse_task(s.str("task", "regression"));
  const std::string source = s.str("data", "simulate");
  if (source == "simulate") {
    SimulationConfig c = simulation_config_from(s, seed);
    c.task = task;
    SyntheticDataset ds = generate(c);
    return {std::move(ds.users), std::move(ds.items), std::move(ds.observations)};
  }
  if (source != "files") throw ValidationError("data must be 'simulate' or 'files'");
  ExperimentData d;
  d.users = load_feature_table(s.str("users", "users.csv"), parse_schema(s.str("user_schema", "")));
  d.items = load_feature_table(s.str("items", "items.csv"), parse_schema(s.str("item_schema", "")));
  d.observations = load_observations(s.str("observations", "obs.csv"), d.users, d.items, task);
  return d;
}

struct MetricValues {
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double mae = std::numeric_limits<double>::quiet_NaN();
  double auc = std::numeric_limits<double>::quiet_NaN();
  double logloss = std::numeric_limits<double>::quiet_NaN();
  std::size_t count = 0;
};

// scores: link scale for the model (converted with the inverse link), or
// response-scale values for the baseline (clipped to [0, 1] as probabilities).
inline MetricValues evaluate_scores(Task task, const Eigen::VectorXd& scores, const Eigen::VectorXd& truth, bool link_scale) {
  MetricValues m;
  m.count = static_cast<std::size_t>(truth.size());
  if (truth.size() == 0) return m;
  if (task == Task::kRegression) {
    m.rmse = rmse(scores, truth);
    m.mae = mae(scores, truth);
    return m;
  }
  Eigen::VectorXd prob(scores.size());
  for (Eigen::Index k = 0; k < scores.size(); ++k) {
    prob(k) = link_scale ? inverse_link(task, scores(k)) : std::clamp(scores(k), 0.0, 1.0);
  }
  const bool both = (truth.array() > 0.5).any() && (truth.array() < 0.5).any();
  if (both) m.auc = auc(scores, truth);
  m.logloss = logloss(prob, truth);
  return m;
}

struct RepeatResult {
  int repeat = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";
  Candidate hyper;
  MetricValues gammli_test, gammli_cold, baseline_test, baseline_cold;
  double stage1_validation_loss = 0.0, stage2_validation_loss = 0.0, latent_validation_loss = 0.0;
  std::optional<FitResult> fit;  // kept when ExperimentOptions::keep_models
  std::optional<TuneResult> tuning;
  DataSplit split;
  std::optional<ColdStartSplit> cold;
};

struct ExperimentReport {
  Task task = Task::kRegression;
  bool cold_start = false;
  bool gammli = true;
  bool baseline = false;
  std::vector<RepeatResult> repeats;
  bool complete() const {
    return std::all_of(repeats.begin(), repeats.end(), [](const auto& r) { return r.status == "ok"; });
  }
};

struct ExperimentOptions {
  std::string out_dir;  // empty: no files
  bool keep_models = false;
};

namespace detail {

inline void write_trace_rows(std::ostream& out, int repeat, const std::string& stage, const TrainTrace& t) {
  out << repeat << ',' << stage << ",0,," << csv::format_double(t.initial_validation_loss) << '\n';
  for (std::size_t e = 0; e < t.train_loss.size(); ++e) {
    out << repeat << ',' << stage << ',' << e + 1 << ',' << csv::format_double(t.train_loss[e]) << ','
        << csv::format_double(t.validation_loss[e]) << '\n';
  }
}

inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  // Sample standard deviation; undefined for a single value.
  return {mean, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : std::numeric_limits<double>::quiet_NaN()};
}

inline std::string fmt(double v) { return std::isfinite(v) ? csv::format_double(v) : std::string(); }

}  // namespace detail

inline void write_metrics_csv(std::ostream& out, const ExperimentReport& r) {
  out << "repeat,model,set,rmse,mae,auc,logloss,count,status\n";
  struct Row {
    std::string model, set;
    const MetricValues RepeatResult::*field;
  };
  std::vector<Row> rows;
  if (r.gammli) {
    rows.push_back({"gammli", "test", &RepeatResult::gammli_test});
    if (r.cold_start) rows.push_back({"gammli", "cold", &RepeatResult::gammli_cold});
  }
  if (r.baseline) {
    rows.push_back({"baseline_svd", "test", &RepeatResult::baseline_test});
    if (r.cold_start) rows.push_back({"baseline_svd", "cold", &RepeatResult::baseline_cold});
  }
  for (const auto& row : rows) {
    std::vector<double> rm, ma, au, ll;
    for (const auto& rep : r.repeats) {
      const MetricValues& m = rep.*(row.field);
      out << rep.repeat << ',' << row.model << ',' << row.set << ',' << detail::fmt(m.rmse) << ',' << detail::fmt(m.mae)
          << ',' << detail::fmt(m.auc) << ',' << detail::fmt(m.logloss) << ',' << m.count << ','
          << csv::quote_if_needed(rep.status) << '\n';
      if (rep.status != "ok") continue;
      for (auto [vec, val] : {std::pair{&rm, m.rmse}, {&ma, m.mae}, {&au, m.auc}, {&ll, m.logloss}}) {
        if (std::isfinite(val)) vec->push_back(val);
      }
    }
    const std::string status = r.complete() ? "complete" : "incomplete";
    for (const char* stat : {"mean", "sd"}) {
      out << stat << ',' << row.model << ',' << row.set;
      for (const auto* vec : {&rm, &ma, &au, &ll}) {
        const auto [mean, sd] = detail::mean_sd(*vec);
        out << ',' << detail::fmt(std::string(stat) == "mean" ? mean : sd);
      }
      out << ",," << status << '\n';
    }
  }
}

// Run-level settings of run_experiment.
struct ExperimentPlan {
  std::uint64_t seed = 0;
  int repeats = 1;
  SplitRatios ratios;
  double cold_fraction = 0.0;
  bool tune = false;
  bool gammli = true;
  bool baseline = true;
  bool explain = true;
  FitConfig fit;
  SearchSpace space;
  BaselineOptions baseline_options;
};

inline ExperimentPlan experiment_plan(const Settings& s) {
  ExperimentPlan p;
  p.seed = s.seed("seed", 0);
  p.repeats = static_cast<int>(s.integer("repeats", 1));
  if (p.repeats < 1) throw ValidationError("repeats must be at least 1");
  p.ratios.train = s.num("train_ratio", p.ratios.train);
  p.ratios.validation = s.num("validation_ratio", p.ratios.validation);
  p.ratios.test = s.num("test_ratio", p.ratios.test);
  p.cold_fraction = s.num("cold_start_fraction", 0.0);
  p.tune = s.flag("tune", false);
  p.gammli = s.flag("gammli", true);
  p.baseline = s.flag("baseline", true);
  if (!p.gammli && !p.baseline) throw ValidationError("nothing to run: gammli and baseline are both disabled");
  p.explain = s.flag("explain", true);
  p.fit = fit_config_from(s);
  p.space = search_space_from(s);
  p.baseline_options.rank = static_cast<int>(s.integer("baseline_rank", p.baseline_options.rank));
  p.fit.validate();
  if (p.tune) p.space.validate();
  return p;
}

// Runs `repeats` seeded repetitions of split -> fit -> evaluate.
inline ExperimentReport run_experiment(const Settings& s, const ExperimentOptions& opt = {}) {
  const ExperimentPlan plan = experiment_plan(s);
  const ExperimentData data = experiment_data(s, derive_seed(plan.seed, "data"));
  s.check_unused();
  const std::uint64_t seed = plan.seed;
  const int repeats = plan.repeats;
  const SplitRatios ratios = plan.ratios;
  const double cold_fraction = plan.cold_fraction;
  const bool do_tune = plan.tune, do_gammli = plan.gammli, do_baseline = plan.baseline, do_explain = plan.explain;
  const FitConfig& base = plan.fit;
  const SearchSpace& space = plan.space;
  BaselineOptions bopt = plan.baseline_options;

  ExperimentReport report;
  report.task = data.observations.task;
  report.cold_start = cold_fraction > 0.0;
  report.gammli = do_gammli;
  report.baseline = do_baseline;

  std::ofstream trace_out;
  if (!opt.out_dir.empty()) {
    std::filesystem::create_directories(opt.out_dir);
    if (do_gammli) {
      trace_out = csv::open_out(opt.out_dir + "/loss_trace.csv");
      trace_out << "repeat,stage,epoch,train_loss,validation_loss\n";
    }
  }

  for (int rep = 0; rep < repeats; ++rep) {
    RepeatResult rr;
    rr.repeat = rep;
    rr.seed = derive_seed(seed, static_cast<std::uint64_t>(rep));
    try {
      ObservationSet pool = data.observations;
      if (report.cold_start) {
        rr.cold = cold_start_split(pool, cold_fraction, derive_seed(rr.seed, "cold"));
        pool = rr.cold->train;
      }
      rr.split = split_observations(pool, ratios, derive_seed(rr.seed, "split"));
      const Task task = report.task;
      const auto& test = rr.split.test;
      if (do_gammli) {
        FitConfig cfg = base;
        cfg.train.seed = derive_seed(rr.seed, "fit");
        AdditiveFit a = fit_additive(FitInput{data.users, data.items, rr.split}, cfg);
        Candidate hyper{cfg.user_groups, cfg.item_groups, cfg.lambda};
        if (do_tune) {
          rr.tuning = tune(a, space);
          hyper = rr.tuning->best;
        }
        rr.hyper = hyper;
        FitResult fr = complete_fit(a, hyper.k, hyper.l, hyper.lambda);
        rr.stage1_validation_loss = fr.stage1_validation_loss;
        rr.stage2_validation_loss = fr.stage2_validation_loss;
        rr.latent_validation_loss = fr.latent_validation_loss;
        rr.gammli_test = evaluate_scores(task, predict_triples(fr.model, data.users, data.items, test.triples),
                                         test.responses(), true);
        if (rr.cold) {
          rr.gammli_cold = evaluate_scores(task, predict_triples(fr.model, data.users, data.items, rr.cold->cold.triples),
                                           rr.cold->cold.responses(), true);
        }
        if (!opt.out_dir.empty()) {
          detail::write_trace_rows(trace_out, rep, "main_effects", fr.stage1_trace);
          detail::write_trace_rows(trace_out, rep, "manifest_interactions", fr.stage2_trace);
          detail::write_trace_rows(trace_out, rep, "fine_tune", fr.fine_tune_trace);
          for (std::size_t it = 0; it < fr.latent_rmse.size(); ++it) {
            trace_out << rep << ",latent_interactions," << it + 1 << ','
                      << csv::format_double(fr.latent_rmse[it] * fr.latent_rmse[it]) << ",\n";
          }
          if (rep == 0) {
            save_model(opt.out_dir + "/model.json", fr.model);
            if (rr.tuning) {
              auto out = csv::open_out(opt.out_dir + "/tune_trace.csv");
              write_tune_trace(out, *rr.tuning);
            }
            if (do_explain) {
              ExplainOptions eo;
              if (!test.empty()) {
                const auto& t = test.triples.front();
                eo.locals.emplace_back(data.users.ids()[static_cast<std::size_t>(t.user)],
                                       data.items.ids()[static_cast<std::size_t>(t.item)]);
              }
              write_explanations(opt.out_dir + "/explain", fr.model, data.users, data.items, rr.split.train.triples, eo);
            }
          }
        }
        if (opt.keep_models) rr.fit = std::move(fr);
      }
      if (do_baseline) {
        bopt.seed = derive_seed(rr.seed, "baseline");
        const BaselineModel b = baseline_svd(rr.split.train, rr.split.validation, bopt);
        rr.baseline_test = evaluate_scores(task, b.predict(test.triples), test.responses(), false);
        if (rr.cold) {
          rr.baseline_cold = evaluate_scores(task, b.predict(rr.cold->cold.triples), rr.cold->cold.responses(), false);
        }
      }
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception& e) {
      rr.status = std::string("failed: ") + e.what();
    }
    report.repeats.push_back(std::move(rr));
  }
  if (!opt.out_dir.empty()) {
    auto out = csv::open_out(opt.out_dir + "/metrics.csv");
    write_metrics_csv(out, report);
  }
  return report;
}

}  // namespace gammli

#endif  // GAMMLI_EXPERIMENT_HPP_
