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


// gammli: command-line front end for simulation, training, tuning,
// prediction, explanation and evaluation.

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gammli/gammli.hpp"
#include "nlohmann/json.hpp"

namespace {

using namespace gammli;

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool settings, bool out_required) {
  if (settings) {
    cmd->add_option("--config", c.config, "Flat key = value settings file")->check(CLI::ExistingFile);
    cmd->add_option("--set", c.sets, "Override a setting (key=value); repeatable");
    cmd->add_option("--seed", c.seed, "Master seed (overrides the 'seed' setting)");
  }
  auto* out = cmd->add_option("--out", c.out, "Output directory");
  if (out_required) out->required();
}

Settings settings_of(const Common& c) {
  Settings s = c.config.empty() ? Settings{} : Settings::load(c.config);
  for (const auto& kv : c.sets) s.set_assignment(kv);
  if (c.seed) s.set("seed", std::to_string(*c.seed));
  return s;
}

void set_default(Settings& s, const std::string& key, const std::string& value) {
  if (!s.has(key)) s.set(key, value);
}

std::string cell(double v, int precision = 4) {
  if (!std::isfinite(v)) return "-";
  std::ostringstream o;
  o << std::fixed << std::setprecision(precision) << v;
  return o.str();
}

void print_summary(std::ostream& out, const ExperimentReport& r) {
  struct Block {
    std::string model, set;
    const MetricValues RepeatResult::*field;
  };
  std::vector<Block> blocks;
  if (r.gammli) blocks.push_back({"gammli", "test", &RepeatResult::gammli_test});
  if (r.gammli && r.cold_start) blocks.push_back({"gammli", "cold", &RepeatResult::gammli_cold});
  if (r.baseline) blocks.push_back({"baseline_svd", "test", &RepeatResult::baseline_test});
  if (r.baseline && r.cold_start) blocks.push_back({"baseline_svd", "cold", &RepeatResult::baseline_cold});
  const bool regression = r.task == Task::kRegression;
  out << std::left << std::setw(14) << "model" << std::setw(6) << "set";
  out << std::setw(20) << (regression ? "rmse" : "auc") << std::setw(20) << (regression ? "mae" : "logloss") << '\n';
  for (const auto& b : blocks) {
    std::vector<double> first, second;
    for (const auto& rep : r.repeats) {
      if (rep.status != "ok") continue;
      const MetricValues& m = rep.*(b.field);
      first.push_back(regression ? m.rmse : m.auc);
      second.push_back(regression ? m.mae : m.logloss);
    }
    auto pm = [](const std::vector<double>& v) {
      const auto [mean, sd] = detail::mean_sd(v);
      return cell(mean) + " +/- " + cell(sd);
    };
    out << std::setw(14) << b.model << std::setw(6) << b.set << std::setw(20) << pm(first) << std::setw(20) << pm(second)
        << '\n';
  }
  for (const auto& rep : r.repeats) {
    if (rep.status != "ok") out << "repeat " << rep.repeat << ": " << rep.status << '\n';
  }
  if (!r.complete()) out << "run incomplete\n";
}

int run_experiment_command(Settings s, const Common& c) {
  const auto report = run_experiment(s, {c.out});
  print_summary(std::cout, report);
  if (report.gammli && !report.repeats.empty() && report.repeats.front().status == "ok") {
    const auto& h = report.repeats.front().hyper;
    std::cout << "groups K=" << h.k << " L=" << h.l << " lambda=" << h.lambda << '\n';
  }
  return report.complete() ? 0 : 1;
}

int simulate_command(const Common& c) {
  Settings s = settings_of(c);
  // A config shared with the other commands may carry fitting settings;
  // they are validated here but otherwise unused.
  const ExperimentPlan plan = experiment_plan(s);
  SimulationConfig config = simulation_config_from(s, derive_seed(plan.seed, "data"));
  config.task = parse_task(s.str("task", "regression"));
  s.check_unused();
  const auto ds = generate(config);
  std::filesystem::create_directories(c.out);
  save_dataset(c.out, ds);
  std::cout << "users " << ds.users.rows() << ", items " << ds.items.rows() << ", observations "
            << ds.observations.triples.size() << '\n';
  return 0;
}

struct PredictArgs {
  std::string model;
  std::string pairs;
  std::string user, item;
  std::string users, items;
  std::string user_features, item_features;
};

FeatureTable load_raw(const std::string& path, const FeatureTable& layout) { return load_feature_table(path, schema_of(layout)); }

// One-row raw table from "v1,v2,..." in model column order.
FeatureTable inline_row(const std::string& id, const std::string& values, const FeatureTable& layout, const char* header) {
  std::string text = header;
  for (const auto& f : layout.features()) text += "," + csv::quote_if_needed(f.name);
  text += "\n" + csv::quote_if_needed(id) + "," + values + "\n";
  std::istringstream in(text);
  return read_feature_table(in, schema_of(layout), "features of " + id);
}

nlohmann::ordered_json prediction_json(const PredictionResult& p) {
  nlohmann::ordered_json j;
  j["user_id"] = p.user_id;
  j["item_id"] = p.item_id;
  j["score"] = p.score;
  j["prediction"] = p.value;
  j["cold_user"] = p.cold_user;
  j["cold_item"] = p.cold_item;
  j["user_group"] = p.user_group;
  j["item_group"] = p.item_group;
  for (const auto& t : explain_prediction(p).ranked) j["contributions"].push_back({{"name", t.name}, {"value", t.value}});
  return j;
}

int predict_command(const PredictArgs& a, const Common& c) {
  const GammliModel model = load_model(a.model);
  std::optional<FeatureTable> users, items;
  if (!a.users.empty()) users = load_raw(a.users, model.users);
  if (!a.items.empty()) items = load_raw(a.items, model.items);
  const FeatureTable* up = users ? &*users : nullptr;
  const FeatureTable* ip = items ? &*items : nullptr;

  std::vector<std::pair<std::string, std::string>> pairs;
  if (!a.pairs.empty()) {
    auto in = csv::open_in(a.pairs);
    std::string line;
    if (!csv::getline(in, line)) throw ParseError(a.pairs + ": empty file");
    while (csv::getline(in, line)) {
      const auto f = csv::split(line);
      if (f.size() < 2) throw ParseError(a.pairs + ": expected user_id,item_id rows");
      pairs.emplace_back(f[0], f[1]);
    }
  } else {
    if (a.user.empty() || a.item.empty()) throw ValidationError("give --pairs or both --user and --item");
    pairs.emplace_back(a.user, a.item);
  }

  std::vector<PredictionResult> results;
  for (const auto& [u, i] : pairs) results.push_back(predict(model, u, i, up, ip));

  std::ofstream file;
  if (!c.out.empty()) {
    std::filesystem::create_directories(c.out);
    file = csv::open_out(c.out + "/predictions.csv");
  }
  std::ostream& out = c.out.empty() ? std::cout : file;
  out << "user_id,item_id,score,prediction,cold_user,cold_item\n";
  for (const auto& p : results) {
    out << csv::quote_if_needed(p.user_id) << ',' << csv::quote_if_needed(p.item_id) << ',' << csv::format_double(p.score) << ','
        << csv::format_double(p.value) << ',' << p.cold_user << ',' << p.cold_item << '\n';
  }
  return 0;
}

int predict_cold_command(const PredictArgs& a) {
  const GammliModel model = load_model(a.model);
  if (a.user_features.empty() && a.item_features.empty()) {
    throw ValidationError("give --user-features and/or --item-features");
  }
  const std::string uid = a.user.empty() ? "new_user" : a.user;
  const std::string iid = a.item.empty() ? "new_item" : a.item;
  std::optional<FeatureTable> users, items;
  if (!a.user_features.empty()) users = inline_row(uid, a.user_features, model.users, "user_id");
  else if (a.user.empty()) throw ValidationError("give --user-features or a training --user id");
  if (!a.item_features.empty()) items = inline_row(iid, a.item_features, model.items, "item_id");
  else if (a.item.empty()) throw ValidationError("give --item-features or a training --item id");
  std::optional<Eigen::RowVectorXd> urow, irow;
  if (users) urow = model_row(model, Side::kUser, *users, 0);
  if (items) irow = model_row(model, Side::kItem, *items, 0);
  // Inline feature rows always take the cold-start path, even when the id
  // matches a training entity.
  const auto p = predict_cold(model, urow, irow, uid, iid);
  std::cout << prediction_json(p).dump(2) << '\n';
  return 0;
}

struct ExplainArgs {
  std::string model;
  std::string users, items, observations;
  std::vector<std::string> locals;
  int curve_grid = 50;
  int surface_grid = 20;
};

int explain_command(const ExplainArgs& a, const Common& c) {
  const GammliModel model = load_model(a.model);
  const FeatureTable users = load_raw(a.users, model.users);
  const FeatureTable items = load_raw(a.items, model.items);
  const ObservationSet obs = load_observations(a.observations, users, items, model.task);
  ExplainOptions opt;
  opt.curve_grid = a.curve_grid;
  opt.surface_grid = a.surface_grid;
  for (const auto& l : a.locals) {
    const auto colon = l.find(':');
    if (colon == std::string::npos) throw ValidationError("--local expects user_id:item_id, got '" + l + "'");
    opt.locals.emplace_back(l.substr(0, colon), l.substr(colon + 1));
  }
  write_explanations(c.out, model, users, items, obs.triples, opt);
  const auto ir = importance_ratios(model, users, items, obs.triples);
  for (const auto& e : ir.effects) std::cout << std::left << std::setw(16) << e.name << cell(100.0 * e.ratio, 2) << "%\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GAMMLI: explainable recommendation with manifest and latent interactions"};
  app.require_subcommand(1);

  Common sim, train, tune_c, evaluate, baseline, predict_c, cold_c, explain_c;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic dataset");
  add_common(sim_cmd, sim, true, true);
  auto* train_cmd = app.add_subcommand("train", "Fit a model with fixed group counts and lambda");
  add_common(train_cmd, train, true, false);
  auto* tune_cmd = app.add_subcommand("tune", "Fit a model, choosing group counts and lambda by search");
  add_common(tune_cmd, tune_c, true, false);
  auto* eval_cmd = app.add_subcommand("evaluate", "Repeated split / fit / evaluate runs against the SVD baseline");
  add_common(eval_cmd, evaluate, true, false);
  auto* base_cmd = app.add_subcommand("baseline", "Evaluate the rank-5 SVD baseline only");
  add_common(base_cmd, baseline, true, false);

  PredictArgs pa, ca;
  auto* pred_cmd = app.add_subcommand("predict", "Score user-item pairs with a saved model");
  add_common(pred_cmd, predict_c, false, false);
  pred_cmd->add_option("--model", pa.model, "Model file")->required()->check(CLI::ExistingFile);
  pred_cmd->add_option("--pairs", pa.pairs, "CSV of user_id,item_id rows")->check(CLI::ExistingFile);
  pred_cmd->add_option("--user", pa.user, "User id");
  pred_cmd->add_option("--item", pa.item, "Item id");
  pred_cmd->add_option("--users", pa.users, "Raw user features, for ids unseen in training")->check(CLI::ExistingFile);
  pred_cmd->add_option("--items", pa.items, "Raw item features, for ids unseen in training")->check(CLI::ExistingFile);

  auto* cold_cmd = app.add_subcommand("predict-cold", "Score a new user and/or item from raw feature values");
  add_common(cold_cmd, cold_c, false, false);
  cold_cmd->add_option("--model", ca.model, "Model file")->required()->check(CLI::ExistingFile);
  cold_cmd->add_option("--user", ca.user, "User id (a training user unless --user-features is given)");
  cold_cmd->add_option("--item", ca.item, "Item id (a training item unless --item-features is given)");
  cold_cmd->add_option("--user-features", ca.user_features, "Comma-separated raw user features in model column order");
  cold_cmd->add_option("--item-features", ca.item_features, "Comma-separated raw item features in model column order");

  ExplainArgs ea;
  auto* exp_cmd = app.add_subcommand("explain", "Export importance, effect curves, surfaces and group matrix");
  add_common(exp_cmd, explain_c, false, true);
  exp_cmd->add_option("--model", ea.model, "Model file")->required()->check(CLI::ExistingFile);
  exp_cmd->add_option("--users", ea.users, "Raw user feature table")->required()->check(CLI::ExistingFile);
  exp_cmd->add_option("--items", ea.items, "Raw item feature table")->required()->check(CLI::ExistingFile);
  exp_cmd->add_option("--observations", ea.observations, "Observations used for importance ratios")
      ->required()
      ->check(CLI::ExistingFile);
  exp_cmd->add_option("--local", ea.locals, "user_id:item_id pair to explain; repeatable");
  exp_cmd->add_option("--curve-grid", ea.curve_grid, "Grid points per main-effect curve");
  exp_cmd->add_option("--surface-grid", ea.surface_grid, "Grid points per interaction-surface axis");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*sim_cmd) return simulate_command(sim);
    if (*train_cmd) {
      Settings s = settings_of(train);
      set_default(s, "baseline", "false");
      return run_experiment_command(s, train);
    }
    if (*tune_cmd) {
      Settings s = settings_of(tune_c);
      s.set("tune", "true");
      set_default(s, "baseline", "false");
      return run_experiment_command(s, tune_c);
    }
    if (*eval_cmd) return run_experiment_command(settings_of(evaluate), evaluate);
    if (*base_cmd) {
      Settings s = settings_of(baseline);
      s.set("gammli", "false");
      s.set("baseline", "true");
      return run_experiment_command(s, baseline);
    }
    if (*pred_cmd) return predict_command(pa, predict_c);
    if (*cold_cmd) return predict_cold_command(ca);
    if (*exp_cmd) return explain_command(ea, explain_c);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
