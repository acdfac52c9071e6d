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

#ifndef DUS_METRICS_HPP_
#define DUS_METRICS_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dus/numerics.hpp"

namespace dus {

struct ClassificationMetrics {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double mean_ap = 0.0;

  bool operator==(const ClassificationMetrics&) const = default;
};

// accuracy: argmax hits / n.
// macro_f1: unweighted mean over all `classes` of 2tp / (2tp + fp + fn); a
//   class with no predictions and no positives contributes 0.
// mean_ap: mean over classes with at least one positive of the average
//   precision of the ranking by that class's score (ties keep sample order).
ClassificationMetrics classification_metrics(const Matrix& scores,
                                             std::span<const int> labels,
                                             int classes);

// Average precision of ranking samples by `scores` (descending) for the
// samples whose label equals `positive_class`.
double average_precision(std::span<const double> scores,
                         std::span<const int> labels, int positive_class);

struct ModalityMetrics {
  double batch_size = 0.0;
  double proportion = 0.0;
  double score_cumulative = 0.0;
  double score_epoch = 0.0;
  double train_loss = 0.0;
  ClassificationMetrics test;

  bool operator==(const ModalityMetrics&) const = default;
};

// One row per epoch.
struct MetricsRecord {
  int epoch = 0;
  std::vector<ModalityMetrics> modalities;
  ClassificationMetrics fused;
  double fused_loss = 0.0;
  double gap = 0.0;  // spread of the cumulative scores
  double gap_epoch = 0.0;  // spread of this epoch's mean scores
  double reward = 0.0;
  double wall_clock_seconds = 0.0;  // JSON only; CSV rows are reproducible

  bool operator==(const MetricsRecord&) const = default;
};

// Fixed column layout for m modalities; see README for the meaning of each.
std::vector<std::string> csv_columns(std::size_t modality_count);
std::string csv_header(std::size_t modality_count);
std::string to_csv_row(const MetricsRecord& r);
// Inverse of to_csv_row (wall_clock_seconds is not stored and reads as 0).
MetricsRecord from_csv_row(const std::string& line, std::size_t modality_count);
std::string to_csv(std::span<const MetricsRecord> records);

nlohmann::json to_json(const MetricsRecord& r);
MetricsRecord record_from_json(const nlohmann::json& j);

// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace dus

#endif  // DUS_METRICS_HPP_
