/* Copyright 2026 The DUS Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "dus/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "dus/errors.hpp"

namespace dus {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSummarySchema = "dus-summary/1";
constexpr const char* kManifestSchema = "dus-manifest/1";

std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Overlay `user` onto `base`, rejecting keys the defaults do not know. The
// data subtree has source-dependent keys and is checked by parse_data.
void merge_known(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object())
    throw ConfigError((prefix.empty() ? "config" : prefix) + ": expected an object");
  for (const auto& [key, value] : user.items()) {
    const std::string path = join_path(prefix, key);
    if (!base.contains(key)) throw ConfigError(path + ": unknown field");
    if (key == "data" && prefix.empty()) {
      if (!value.is_object()) throw ConfigError("data: expected an object");
      json& data = base[key];
      if (value.value("source", data.value("source", "synthetic")) != "synthetic")
        data = json::object();
      for (const auto& [k, v] : value.items()) data[k] = v;
    } else if (base[key].is_object() && value.is_object()) {
      merge_known(base[key], value, path);
    } else {
      base[key] = value;
    }
  }
}

const json& field(const json& node, const std::string& key, const std::string& path) {
  if (!node.contains(key)) throw ConfigError(join_path(path, key) + ": missing field");
  return node.at(key);
}

double get_number(const json& node, const std::string& key, const std::string& path) {
  const json& v = field(node, key, path);
  if (!v.is_number()) throw ConfigError(join_path(path, key) + ": expected a number");
  return v.get<double>();
}

long long get_integer(const json& node, const std::string& key, const std::string& path,
                      long long min_value) {
  const json& v = field(node, key, path);
  if (!v.is_number_integer())
    throw ConfigError(join_path(path, key) + ": expected an integer");
  const auto x = v.get<long long>();
  if (x < min_value)
    throw ConfigError(join_path(path, key) + ": must be >= " + std::to_string(min_value));
  return x;
}

std::string get_string(const json& node, const std::string& key, const std::string& path) {
  const json& v = field(node, key, path);
  if (!v.is_string()) throw ConfigError(join_path(path, key) + ": expected a string");
  return v.get<std::string>();
}

StrategyKind strategy_from(const std::string& name, const std::string& path) {
  auto k = parse_strategy(name);
  if (!k)
    throw ConfigError(path + ": unknown strategy '" + name +
                      "' (expected equal, heuristic, discprop or reinforce)");
  return *k;
}

CsvSplitSource parse_csv_split(const json& node, const std::string& path,
                               const fs::path& base_dir) {
  if (!node.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [k, v] : node.items())
    if (k != "modalities" && k != "labels") throw ConfigError(join_path(path, k) + ": unknown field");
  CsvSplitSource src;
  const json& mods = field(node, "modalities", path);
  if (!mods.is_array() || mods.size() < 2)
    throw ConfigError(path + ".modalities: expected a list of at least two CSV paths");
  for (const auto& m : mods) {
    if (!m.is_string()) throw ConfigError(path + ".modalities: expected strings");
    fs::path p = m.get<std::string>();
    src.modalities.push_back(p.is_relative() ? base_dir / p : p);
  }
  fs::path labels = get_string(node, "labels", path);
  src.labels = labels.is_relative() ? base_dir / labels : labels;
  return src;
}

DataSource parse_data(const json& node, const fs::path& base_dir) {
  DataSource d;
  const std::string source = get_string(node, "source", "data");
  if (source == "synthetic") {
    static const std::set<std::string> known{"source", "n_train", "n_val", "n_test",
                                             "classes", "seed", "modalities"};
    for (const auto& [k, v] : node.items())
      if (!known.contains(k)) throw ConfigError("data." + k + ": unknown field");
    SyntheticSpec& s = d.synthetic;
    s.n_train = static_cast<std::size_t>(get_integer(node, "n_train", "data", 1));
    s.n_val = static_cast<std::size_t>(get_integer(node, "n_val", "data", 0));
    s.n_test = static_cast<std::size_t>(get_integer(node, "n_test", "data", 1));
    s.classes = static_cast<int>(get_integer(node, "classes", "data", 2));
    s.seed = static_cast<std::uint64_t>(get_integer(node, "seed", "data", 0));
    const json& mods = field(node, "modalities", "data");
    if (!mods.is_array() || mods.size() < 2)
      throw ConfigError("data.modalities: expected a list of at least two modalities");
    for (std::size_t j = 0; j < mods.size(); ++j) {
      const std::string path = "data.modalities." + std::to_string(j);
      const json& m = mods[j];
      if (!m.is_object()) throw ConfigError(path + ": expected an object");
      for (const auto& [k, v] : m.items())
        if (k != "dim" && k != "snr" && k != "mean_scale")
          throw ConfigError(path + "." + k + ": unknown field");
      ModalitySpec ms;
      ms.dim = static_cast<std::size_t>(get_integer(m, "dim", path, 1));
      ms.snr = get_number(m, "snr", path);
      if (m.contains("mean_scale")) ms.mean_scale = get_number(m, "mean_scale", path);
      s.modalities.push_back(ms);
    }
    try {
      s.validate();
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("data: ") + e.what());
    }
  } else if (source == "csv") {
    for (const auto& [k, v] : node.items())
      if (k != "source" && k != "train" && k != "test")
        throw ConfigError("data." + k + ": unknown field");
    d.kind = DataSource::Kind::kCsv;
    d.train = parse_csv_split(field(node, "train", "data"), "data.train", base_dir);
    d.test = parse_csv_split(field(node, "test", "data"), "data.test", base_dir);
    if (d.train.modalities.size() != d.test.modalities.size())
      throw ConfigError("data.test.modalities: must list as many files as data.train.modalities");
  } else {
    throw ConfigError("data.source: expected 'synthetic' or 'csv'");
  }
  return d;
}

template <class T, class F>
std::vector<T> parse_axis(const json& sweep, const std::string& key, T fallback, F convert) {
  const std::string path = "sweep." + key;
  const json& v = sweep.at(key);
  if (v.is_null()) return {fallback};
  if (!v.is_array() || v.empty()) throw ConfigError(path + ": expected a non-empty list");
  std::vector<T> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    T x = convert(v[i], path + "." + std::to_string(i));
    if (std::ranges::find(out, x) != out.end())
      throw ConfigError(path + ": duplicate entry");
    out.push_back(x);
  }
  return out;
}

std::string iso_time_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

json stat_json(const std::vector<double>& xs) {
  if (xs.empty()) return {{"mean", nullptr}, {"std", nullptr}};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
  return {{"mean", mean}, {"std", sd}};
}

std::map<std::string, double> final_metrics(const TrainResult& r) {
  std::map<std::string, double> out;
  const MetricsRecord& last = r.records.back();
  out["fused_acc"] = last.fused.accuracy;
  out["fused_macf1"] = last.fused.macro_f1;
  out["fused_map"] = last.fused.mean_ap;
  out["gap"] = last.gap;
  out["gap_epoch"] = last.gap_epoch;
  double reward = 0.0;
  for (const auto& rec : r.records) reward += rec.reward;
  out["reward_mean"] = reward / static_cast<double>(r.records.size());
  for (std::size_t j = 0; j < last.modalities.size(); ++j) {
    const std::string s = "_" + std::to_string(j + 1);
    out["acc" + s] = last.modalities[j].test.accuracy;
    out["macf1" + s] = last.modalities[j].test.macro_f1;
    out["map" + s] = last.modalities[j].test.mean_ap;
    out["score_cum" + s] = last.modalities[j].score_cumulative;
    double batch = 0.0;
    for (const auto& rec : r.records) batch += rec.modalities[j].batch_size;
    out["batch" + s] = batch / static_cast<double>(r.records.size());
  }
  return out;
}

std::string fixed4(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

json default_config() {
  return {
      {"epochs", 30},
      {"batch_budget", 128},
      {"strategy", "equal"},
      {"mml_mode", "joint"},
      {"score_mode", "cumulative"},
      {"fusion", "late_mean_logits"},
      {"rounding", "independent"},
      {"hidden", 32},
      {"seeds", {0}},
      {"output_dir", "runs"},
      {"optimizer", {{"learning_rate", 1e-2}, {"momentum", 0.9}, {"weight_decay", 1e-4}}},
      {"policy",
       {{"hidden", 16}, {"sigma", 0.5}, {"learning_rate", 1e-4}, {"beta", 0.5}, {"alpha", nullptr}}},
      {"data",
       {{"source", "synthetic"},
        {"n_train", 1000},
        {"n_val", 0},
        {"n_test", 2000},
        {"classes", 10},
        {"seed", 7},
        {"modalities",
         {{{"dim", 16}, {"snr", 5.0}, {"mean_scale", 0.5}},
          {{"dim", 16}, {"snr", 1.0}, {"mean_scale", 0.5}}}}}},
      {"sweep", {{"strategies", nullptr}, {"batch_budgets", nullptr}, {"policy_learning_rates", nullptr}}},
  };
}

json load_config_file(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  if (j.is_object() && j.value("schema", "") == kManifestSchema) {
    if (!j.contains("config")) throw ConfigError(file.string() + ": manifest has no config");
    return j.at("config");
  }
  return j;
}

void apply_override(json& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0)
    throw ConfigError("override '" + std::string(assignment) + "': expected key=value");
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &config;
  std::stringstream ss(key);
  std::string segment;
  std::vector<std::string> segments;
  while (std::getline(ss, segment, '.')) segments.push_back(segment);
  for (std::size_t i = 0; i < segments.size(); ++i) {
    const std::string& s = segments[i];
    const bool last = i + 1 == segments.size();
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(s);
      } catch (const std::exception&) {
        throw ConfigError(key + ": '" + s + "' is not an array index");
      }
      if (idx >= node->size()) throw ConfigError(key + ": index " + s + " out of range");
      node = &(*node)[idx];
    } else {
      if (node->is_null()) *node = json::object();
      if (!node->is_object()) throw ConfigError(key + ": '" + s + "' is not inside an object");
      node = &(*node)[s];
    }
    if (last) *node = value;
  }
}

RunConfig parse_run_config(const json& config, const fs::path& base_dir) {
  json merged = default_config();
  merge_known(merged, config, "");

  RunConfig rc;
  rc.data = parse_data(merged.at("data"), base_dir);
  const std::size_t m = rc.data.kind == DataSource::Kind::kSynthetic
                            ? rc.data.synthetic.modalities.size()
                            : rc.data.train.modalities.size();

  TrainConfig& t = rc.train;
  t.epochs = static_cast<int>(get_integer(merged, "epochs", "", 1));
  t.batch_budget = static_cast<std::size_t>(get_integer(merged, "batch_budget", "", 1));
  t.strategy = strategy_from(get_string(merged, "strategy", ""), "strategy");
  const std::string mml = get_string(merged, "mml_mode", "");
  if (mml == "joint") t.mml_mode = MmlMode::kJoint;
  else if (mml == "alternating") t.mml_mode = MmlMode::kAlternating;
  else throw ConfigError("mml_mode: expected 'joint' or 'alternating'");
  const std::string score = get_string(merged, "score_mode", "");
  if (score == "cumulative") t.score_mode = ScoreMode::kCumulative;
  else if (score == "instantaneous") t.score_mode = ScoreMode::kInstantaneous;
  else throw ConfigError("score_mode: expected 'cumulative' or 'instantaneous'");
  if (get_string(merged, "fusion", "") != "late_mean_logits")
    throw ConfigError("fusion: only 'late_mean_logits' is supported");
  const std::string rounding = get_string(merged, "rounding", "");
  if (rounding == "independent") t.rounding = Rounding::kIndependent;
  else if (rounding == "largest_remainder") t.rounding = Rounding::kLargestRemainder;
  else throw ConfigError("rounding: expected 'independent' or 'largest_remainder'");
  t.hidden = static_cast<std::size_t>(get_integer(merged, "hidden", "", 1));

  const json& opt = merged.at("optimizer");
  t.optimizer.learning_rate = get_number(opt, "learning_rate", "optimizer");
  t.optimizer.momentum = get_number(opt, "momentum", "optimizer");
  t.optimizer.weight_decay = get_number(opt, "weight_decay", "optimizer");

  const json& pol = merged.at("policy");
  t.policy_hidden = static_cast<std::size_t>(get_integer(pol, "hidden", "policy", 1));
  t.policy_sigma = get_number(pol, "sigma", "policy");
  t.policy_learning_rate = get_number(pol, "learning_rate", "policy");
  t.beta = get_number(pol, "beta", "policy");
  if (!pol.at("alpha").is_null()) t.alpha = get_number(pol, "alpha", "policy");

  const json& seeds = merged.at("seeds");
  if (!seeds.is_array() || seeds.empty())
    throw ConfigError("seeds: expected a non-empty list of integers");
  for (const auto& s : seeds) {
    if (!s.is_number_integer() || s.get<long long>() < 0)
      throw ConfigError("seeds: entries must be non-negative integers");
    const auto v = s.get<std::uint64_t>();
    if (std::ranges::find(rc.seeds, v) != rc.seeds.end())
      throw ConfigError("seeds: duplicate entry");
    rc.seeds.push_back(v);
  }
  rc.output_dir = get_string(merged, "output_dir", "");
  if (rc.output_dir.empty()) throw ConfigError("output_dir: must not be empty");

  const json& sweep = merged.at("sweep");
  rc.sweep.strategies = parse_axis<StrategyKind>(
      sweep, "strategies", t.strategy, [](const json& v, const std::string& path) {
        if (!v.is_string()) throw ConfigError(path + ": expected a strategy name");
        return strategy_from(v.get<std::string>(), path);
      });
  rc.sweep.batch_budgets = parse_axis<std::size_t>(
      sweep, "batch_budgets", t.batch_budget, [m](const json& v, const std::string& path) {
        if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(m))
          throw ConfigError(path + ": expected an integer >= the modality count");
        return v.get<std::size_t>();
      });
  rc.sweep.policy_learning_rates = parse_axis<double>(
      sweep, "policy_learning_rates", t.policy_learning_rate,
      [](const json& v, const std::string& path) {
        if (!v.is_number() || !(v.get<double>() >= 0.0))
          throw ConfigError(path + ": expected a non-negative number");
        return v.get<double>();
      });

  try {
    t.validate(m);
  } catch (const ValidationError& e) {
    throw ConfigError(e.what());
  }
  rc.resolved = merged;
  return rc;
}

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string GridCell::group() const {
  std::string g = std::string(to_string(strategy)) + "_nb" + std::to_string(batch_budget);
  if (strategy == StrategyKind::kReinforce) g += "_lr" + format_double(policy_learning_rate);
  return g;
}

std::string GridCell::name() const { return group() + "_seed" + std::to_string(seed); }

std::vector<GridCell> expand_grid(const RunConfig& config) {
  std::vector<GridCell> cells;
  for (auto s : config.sweep.strategies)
    for (auto nb : config.sweep.batch_budgets)
      if (s == StrategyKind::kReinforce) {
        for (auto lr : config.sweep.policy_learning_rates)
          for (auto seed : config.seeds) cells.push_back({s, nb, lr, seed});
      } else {
        // The policy learning rate only matters to the learned strategy.
        for (auto seed : config.seeds)
          cells.push_back({s, nb, config.train.policy_learning_rate, seed});
      }
  return cells;
}

std::vector<std::string> summary_metric_names(std::size_t modality_count) {
  std::vector<std::string> names{"fused_acc", "fused_macf1", "fused_map", "gap", "gap_epoch",
                                 "reward_mean"};
  for (std::size_t j = 1; j <= modality_count; ++j)
    for (const char* base : {"acc", "macf1", "map", "score_cum", "batch"})
      names.push_back(std::string(base) + "_" + std::to_string(j));
  return names;
}

json summarize(const RunConfig& config, std::span<const GridCell> cells,
               std::span<const TrainResult> results) {
  std::size_t m = 0;
  for (const auto& r : results)
    if (!r.records.empty()) m = r.records.front().modalities.size();
  if (m == 0)
    m = config.data.kind == DataSource::Kind::kSynthetic ? config.data.synthetic.modalities.size()
                                                         : config.data.train.modalities.size();
  const auto names = summary_metric_names(m);

  std::vector<std::string> order;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const std::string g = cells[i].group();
    if (!groups.contains(g)) order.push_back(g);
    groups[g].push_back(i);
  }
  json rows = json::array();
  for (const auto& g : order) {
    const auto& idx = groups[g];
    const GridCell& c = cells[idx.front()];
    std::map<std::string, std::vector<double>> values;
    json seeds = json::array();
    std::size_t diverged = 0;
    for (std::size_t i : idx) {
      seeds.push_back(cells[i].seed);
      if (results[i].diverged || results[i].records.empty()) {
        ++diverged;
        continue;
      }
      for (const auto& [k, v] : final_metrics(results[i])) values[k].push_back(v);
    }
    json metrics = json::object();
    for (const auto& n : names) metrics[n] = stat_json(values[n]);
    rows.push_back({{"group", g},
                    {"strategy", to_string(c.strategy)},
                    {"batch_budget", c.batch_budget},
                    {"policy_learning_rate", c.policy_learning_rate},
                    {"seeds", seeds},
                    {"runs", idx.size() - diverged},
                    {"diverged_runs", diverged},
                    {"metrics", metrics}});
  }
  return {{"schema", kSummarySchema},
          {"config_hash", config_hash(config.resolved)},
          {"modality_count", m},
          {"epochs", config.train.epochs},
          {"metrics", names},
          {"cells", rows}};
}

RunOutcome execute_run(const RunConfig& config) {
  RunOutcome out;
  out.output_dir = config.output_dir;
  const std::string started = iso_time_now();
  try {
    fs::create_directories(out.output_dir);
  } catch (const fs::filesystem_error& e) {
    out.exit_code = kExitConfig;
    out.message = "output_dir: cannot create " + out.output_dir.string() + ": " + e.what();
    return out;
  }

  MultimodalDataset train_split, test_split;
  try {
    if (config.data.kind == DataSource::Kind::kSynthetic) {
      SyntheticSplits s = generate_synthetic(config.data.synthetic);
      train_split = std::move(s.train);
      test_split = std::move(s.test);
    } else {
      train_split = load_csv(config.data.train.modalities, config.data.train.labels, Split::kTrain);
      test_split = load_csv(config.data.test.modalities, config.data.test.labels, Split::kTest);
      if (test_split.num_classes > train_split.num_classes)
        throw IngestionError("test labels use classes absent from the train split");
      test_split.num_classes = train_split.num_classes;
    }
  } catch (const std::exception& e) {
    out.exit_code = kExitConfig;
    out.message = std::string("data: ") + e.what();
    return out;
  }

  const std::vector<GridCell> cells = expand_grid(config);
  std::vector<TrainResult> results(cells.size());
  std::vector<std::string> errors(cells.size());
  std::vector<double> seconds(cells.size(), 0.0);
  const auto n = static_cast<long long>(cells.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < n; ++i) {
    const GridCell& cell = cells[static_cast<std::size_t>(i)];
    TrainConfig tc = config.train;
    tc.strategy = cell.strategy;
    tc.batch_budget = cell.batch_budget;
    tc.policy_learning_rate = cell.policy_learning_rate;
    tc.seed = cell.seed;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      results[static_cast<std::size_t>(i)] = train(train_split, test_split, tc);
    } catch (const std::exception& e) {
      errors[static_cast<std::size_t>(i)] = e.what();
    }
    seconds[static_cast<std::size_t>(i)] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  for (std::size_t i = 0; i < cells.size(); ++i)
    if (!errors[i].empty()) {
      out.exit_code = kExitConfig;
      out.message = cells[i].name() + ": " + errors[i];
      return out;
    }

  const std::size_t m = train_split.modality_count();
  json runs = json::array();
  std::vector<std::string> diverged_cells;
  try {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const std::string file = "metrics_" + cells[i].name() + ".csv";
      std::string csv = csv_header(m) + "\n";
      for (const auto& r : results[i].records) csv += to_csv_row(r) + "\n";
      write_file(out.output_dir / file, csv);
      out.metric_files.push_back(out.output_dir / file);
      json run = {{"cell", cells[i].name()},
                  {"metrics", file},
                  {"seconds", seconds[i]},
                  {"diverged", results[i].diverged}};
      if (results[i].diverged) {
        const std::string diag = "diagnostic_" + cells[i].name() + ".json";
        json d = {{"cell", cells[i].name()},
                  {"message", results[i].diagnostic},
                  {"epochs_completed", results[i].records.size()}};
        write_file(out.output_dir / diag, d.dump(2) + "\n");
        run["diagnostic"] = diag;
        diverged_cells.push_back(cells[i].name());
      }
      runs.push_back(run);
    }
    out.summary = out.output_dir / "summary.json";
    write_file(out.summary, summarize(config, cells, results).dump(2) + "\n");

    json manifest = {{"schema", kManifestSchema},
                     {"tool", "dus"},
                     {"version", DUS_VERSION},
                     {"config_hash", config_hash(config.resolved)},
                     {"config", config.resolved},
                     {"started_at", started},
                     {"finished_at", iso_time_now()},
                     {"summary", "summary.json"},
                     {"runs", runs}};
    for (const auto& r : runs) {
      if (!fs::exists(out.output_dir / r.at("metrics").get<std::string>()))
        throw std::runtime_error("manifest references a missing file");
    }
    out.manifest = out.output_dir / "manifest.json";
    write_file(out.manifest, manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    out.exit_code = kExitConfig;
    out.message = std::string("output_dir: ") + e.what();
    return out;
  }

  if (!diverged_cells.empty()) {
    out.exit_code = kExitDivergence;
    out.message = "training diverged in " + std::to_string(diverged_cells.size()) +
                  " cell(s), first: " + diverged_cells.front();
  } else {
    out.message = "wrote " + std::to_string(cells.size()) + " run(s) to " +
                  out.output_dir.string();
  }
  return out;
}

CompareOutcome compare_summaries(std::span<const fs::path> summaries) {
  CompareOutcome out;
  if (summaries.size() < 2) {
    out.exit_code = kExitConfig;
    out.message = "compare: need at least two summary files";
    return out;
  }
  std::vector<json> docs;
  for (const auto& p : summaries) {
    std::ifstream in(p);
    if (!in) {
      out.exit_code = kExitConfig;
      out.message = "compare: cannot open " + p.string();
      return out;
    }
    try {
      docs.push_back(json::parse(in));
    } catch (const json::parse_error& e) {
      out.exit_code = kExitConfig;
      out.message = "compare: " + p.string() + ": " + e.what();
      return out;
    }
    const json& d = docs.back();
    if (!d.is_object() || d.value("schema", "") != kSummarySchema || !d.contains("metrics") ||
        !d.contains("cells")) {
      out.exit_code = kExitConfig;
      out.message = "compare: " + p.string() + " is not a summary file";
      return out;
    }
    if (d.at("metrics") != docs.front().at("metrics") ||
        d.value("modality_count", 0) != docs.front().value("modality_count", 0)) {
      out.exit_code = kExitConfig;
      out.message = "compare: metric schema of " + p.string() + " differs from " +
                    summaries.front().string();
      return out;
    }
  }

  const auto names = docs.front().at("metrics").get<std::vector<std::string>>();
  const std::vector<std::string> delta_names{"fused_acc", "fused_macf1", "fused_map", "gap"};
  std::vector<std::string> header{"source", "strategy", "batch_budget", "policy_lr", "runs"};
  for (const auto& n : names) header.push_back(n);
  header.push_back("fused_acc_std");
  for (const auto& n : delta_names) header.push_back("delta_" + n);

  std::map<std::string, const json*> baseline;
  for (const auto& cell : docs.front().at("cells")) baseline[cell.at("group")] = &cell;

  auto mean_of = [](const json& cell, const std::string& n) -> std::optional<double> {
    const json& v = cell.at("metrics").at(n).at("mean");
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };

  std::vector<std::vector<std::string>> csv_rows, text_rows;
  for (std::size_t s = 0; s < docs.size(); ++s) {
    for (const auto& cell : docs[s].at("cells")) {
      std::vector<std::string> c{summaries[s].string(), cell.at("strategy"),
                                 std::to_string(cell.at("batch_budget").get<std::size_t>()),
                                 format_double(cell.at("policy_learning_rate").get<double>()),
                                 std::to_string(cell.at("runs").get<std::size_t>())};
      std::vector<std::string> t = c;
      auto push = [&](std::optional<double> v) {
        c.push_back(v ? format_double(*v) : "");
        t.push_back(v ? fixed4(*v) : "-");
      };
      for (const auto& n : names) push(mean_of(cell, n));
      const json& sd = cell.at("metrics").at("fused_acc").at("std");
      push(sd.is_null() ? std::nullopt : std::optional<double>(sd.get<double>()));
      const auto it = baseline.find(cell.at("group"));
      for (const auto& n : delta_names) {
        std::optional<double> d;
        if (it != baseline.end()) {
          const auto a = mean_of(cell, n);
          const auto b = mean_of(*it->second, n);
          if (a && b) d = *a - *b;
        }
        push(d);
      }
      csv_rows.push_back(std::move(c));
      text_rows.push_back(std::move(t));
    }
  }

  auto join = [](const std::vector<std::string>& cells) {
    std::string line;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) line += ',';
      line += cells[i];
    }
    return line;
  };
  out.csv = join(header) + "\n";
  for (const auto& r : csv_rows) out.csv += join(r) + "\n";

  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : text_rows)
    for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
  auto line = [&](const std::vector<std::string>& r) {
    std::string s;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) s += "  ";
      s += r[i];
      if (i + 1 < r.size()) s.append(width[i] - r[i].size(), ' ');
    }
    return s + "\n";
  };
  out.text = line(header);
  for (const auto& r : text_rows) out.text += line(r);
  return out;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"dus: per-modality batch-size rebalancing experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string run_out;
  std::string seeds;
  auto* run = app.add_subcommand("run", "train every grid cell of a config");
  run->add_option("config", config_path, "JSON config (or a manifest.json to re-run)")->required();
  run->add_option("--override", overrides, "dotted.key=value, repeatable");
  run->add_option("--out", run_out, "output directory (wins over config and $DUS_OUTPUT_ROOT)");
  run->add_option("--seeds", seeds, "comma separated seed list, e.g. 0,1,2");

  std::vector<std::string> summary_paths;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "tabulate two or more summary.json files");
  compare->add_option("summaries", summary_paths, "summary.json files")->required();
  compare->add_option("--out", compare_out, "directory for comparison.csv / comparison.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (run->parsed()) {
    RunConfig rc;
    try {
      json cfg = load_config_file(config_path);
      for (const auto& o : overrides) apply_override(cfg, o);
      if (!seeds.empty()) {
        json list = json::array();
        std::stringstream ss(seeds);
        std::string item;
        while (std::getline(ss, item, ',')) {
          try {
            std::size_t pos = 0;
            const long long v = std::stoll(item, &pos);
            if (pos != item.size() || v < 0) throw std::invalid_argument(item);
            list.push_back(v);
          } catch (const std::exception&) {
            throw ConfigError("--seeds: '" + item + "' is not a non-negative integer");
          }
        }
        cfg["seeds"] = list;
      }
      rc = parse_run_config(cfg, fs::path(config_path).parent_path());
      if (!run_out.empty()) {
        rc.output_dir = run_out;
      } else if (const char* root = std::getenv(kOutputRootEnv); root && *root) {
        rc.output_dir = fs::path(root) / rc.output_dir;
      }
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfig;
    }
    const RunOutcome outcome = execute_run(rc);
    (outcome.exit_code == kExitOk ? std::cout : std::cerr) << outcome.message << "\n";
    return outcome.exit_code;
  }

  std::vector<fs::path> paths(summary_paths.begin(), summary_paths.end());
  const CompareOutcome outcome = compare_summaries(paths);
  if (outcome.exit_code != kExitOk) {
    std::cerr << outcome.message << "\n";
    return outcome.exit_code;
  }
  std::cout << outcome.text;
  if (!compare_out.empty()) {
    try {
      fs::create_directories(compare_out);
      write_file(fs::path(compare_out) / "comparison.csv", outcome.csv);
      write_file(fs::path(compare_out) / "comparison.txt", outcome.text);
    } catch (const std::exception& e) {
      std::cerr << "compare: " << e.what() << "\n";
      return kExitConfig;
    }
  }
  return kExitOk;
}

}  // namespace dus
