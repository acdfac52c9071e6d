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

// Experiment runner behind the `dus` command line tool: configuration
// parsing with dotted-path overrides, grid expansion over strategies,
// budgets, policy learning rates and seeds, and the on-disk artifacts
// (per-cell metric CSVs, summary.json, manifest.json, comparison tables).

#ifndef DUS_RUNNER_HPP_
#define DUS_RUNNER_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dus/data.hpp"
#include "dus/trainer.hpp"

namespace dus {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;

// Output root override; --out still wins over it.
inline constexpr const char* kOutputRootEnv = "DUS_OUTPUT_ROOT";

struct CsvSplitSource {
  std::vector<std::filesystem::path> modalities;
  std::filesystem::path labels;
};

struct DataSource {
  enum class Kind { kSynthetic, kCsv } kind = Kind::kSynthetic;
  SyntheticSpec synthetic;
  CsvSplitSource train;
  CsvSplitSource test;
};

struct SweepAxes {
  std::vector<StrategyKind> strategies;
  std::vector<std::size_t> batch_budgets;
  std::vector<double> policy_learning_rates;
};

struct RunConfig {
  TrainConfig train;  // seed is replaced per grid cell
  DataSource data;
  std::filesystem::path output_dir;
  std::vector<std::uint64_t> seeds;
  SweepAxes sweep;
  nlohmann::json resolved;  // fully defaulted config tree
};

// Every recognised key with its default value.
nlohmann::json default_config();

// Reads a config (or a manifest, whose embedded config is used). Throws
// ConfigError.
nlohmann::json load_config_file(const std::filesystem::path& file);

// "a.b.c=value". The value is parsed as JSON when possible and kept as a
// string otherwise. Numeric segments index into arrays. Throws ConfigError.
void apply_override(nlohmann::json& config, std::string_view assignment);

// Validates the merged tree and builds the typed configuration. Relative
// CSV paths resolve against `base_dir`. Throws ConfigError naming the field.
RunConfig parse_run_config(const nlohmann::json& config,
                           const std::filesystem::path& base_dir = {});

// FNV-1a of the canonical (sorted-key) dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

struct GridCell {
  StrategyKind strategy = StrategyKind::kEqual;
  std::size_t batch_budget = 128;
  double policy_learning_rate = 1e-4;
  std::uint64_t seed = 0;

  // e.g. "reinforce_nb128_lr0.1_seed3"
  std::string name() const;
  // Same without the seed; identifies the summary row. Only reinforce
  // cells carry the learning rate, e.g. "equal_nb64".
  std::string group() const;
};

std::vector<GridCell> expand_grid(const RunConfig& config);

struct RunOutcome {
  int exit_code = kExitOk;
  std::string message;
  std::filesystem::path output_dir;
  std::filesystem::path summary;
  std::filesystem::path manifest;
  std::vector<std::filesystem::path> metric_files;
};

// Trains every grid cell and writes the artifacts. Cells run in parallel
// when OpenMP threads are available; results do not depend on it.
RunOutcome execute_run(const RunConfig& config);

// Per-group mean and sample standard deviation of the final-epoch metrics.
nlohmann::json summarize(const RunConfig& config, std::span<const GridCell> cells,
                         std::span<const TrainResult> results);

// Names of the summary metrics for m modalities, in table order.
std::vector<std::string> summary_metric_names(std::size_t modality_count);

struct CompareOutcome {
  int exit_code = kExitOk;
  std::string message;
  std::string csv;
  std::string text;
};

// Aligned comparison of two or more summaries. Rows of later summaries
// carry deltas against the row of the first summary with the same group.
CompareOutcome compare_summaries(std::span<const std::filesystem::path> summaries);

// Entry point of the `dus` executable.
int run_cli(int argc, char** argv);

}  // namespace dus

#endif  // DUS_RUNNER_HPP_
