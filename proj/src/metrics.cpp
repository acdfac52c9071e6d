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

#include "dus/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <sstream>

#include "dus/errors.hpp"

namespace dus {

double average_precision(std::span<const double> scores,
                         std::span<const int> labels, int positive_class) {
  if (scores.size() != labels.size())
    throw DimensionError("average_precision: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::stable_sort(order, [&](std::size_t l, std::size_t r) {
    return scores[l] > scores[r];
  });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] != positive_class) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  return hits ? sum / static_cast<double>(hits) : 0.0;
}

ClassificationMetrics classification_metrics(const Matrix& scores,
                                             std::span<const int> labels,
                                             int classes) {
  const std::size_t n = scores.rows();
  const std::size_t c = static_cast<std::size_t>(classes);
  if (labels.size() != n || scores.cols() != c)
    throw DimensionError("classification_metrics: shape mismatch");
  if (n == 0) throw ValidationError("classification_metrics: empty split");

  std::vector<std::size_t> tp(c, 0), fp(c, 0), fn(c, 0), support(c, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = scores.row(i);
    const auto pred = static_cast<std::size_t>(std::ranges::max_element(row) - row.begin());
    const auto truth = static_cast<std::size_t>(labels[i]);
    ++support[truth];
    if (pred == truth) {
      ++correct;
      ++tp[truth];
    } else {
      ++fp[pred];
      ++fn[truth];
    }
  }
  ClassificationMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(n);

  double f1_sum = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    const std::size_t denom = 2 * tp[k] + fp[k] + fn[k];
    if (denom > 0)
      f1_sum += 2.0 * static_cast<double>(tp[k]) / static_cast<double>(denom);
  }
  m.macro_f1 = f1_sum / static_cast<double>(c);

  double ap_sum = 0.0;
  std::size_t ap_classes = 0;
  std::vector<double> column(n);
  for (std::size_t k = 0; k < c; ++k) {
    if (support[k] == 0) continue;
    for (std::size_t i = 0; i < n; ++i) column[i] = scores(i, k);
    ap_sum += average_precision(column, labels, static_cast<int>(k));
    ++ap_classes;
  }
  m.mean_ap = ap_classes ? ap_sum / static_cast<double>(ap_classes) : 0.0;
  return m;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> csv_columns(std::size_t modality_count) {
  std::vector<std::string> cols{"epoch"};
  for (std::size_t j = 1; j <= modality_count; ++j) {
    const std::string s = "_" + std::to_string(j);
    for (const char* base : {"batch", "proportion", "score_cum", "score_epoch",
                             "train_loss", "acc", "macf1", "map"})
      cols.push_back(base + s);
  }
  for (const char* c : {"fused_acc", "fused_macf1", "fused_map", "fused_loss",
                        "gap", "gap_epoch", "reward"})
    cols.emplace_back(c);
  return cols;
}

std::string csv_header(std::size_t modality_count) {
  std::string out;
  for (const auto& c : csv_columns(modality_count)) {
    if (!out.empty()) out += ',';
    out += c;
  }
  return out;
}

std::string to_csv_row(const MetricsRecord& r) {
  std::string out = std::to_string(r.epoch);
  auto put = [&out](double v) {
    out += ',';
    out += format_double(v);
  };
  for (const auto& m : r.modalities) {
    put(m.batch_size);
    put(m.proportion);
    put(m.score_cumulative);
    put(m.score_epoch);
    put(m.train_loss);
    put(m.test.accuracy);
    put(m.test.macro_f1);
    put(m.test.mean_ap);
  }
  put(r.fused.accuracy);
  put(r.fused.macro_f1);
  put(r.fused.mean_ap);
  put(r.fused_loss);
  put(r.gap);
  put(r.gap_epoch);
  put(r.reward);
  return out;
}

MetricsRecord from_csv_row(const std::string& line, std::size_t modality_count) {
  std::vector<double> v;
  std::stringstream ss(line);
  std::string cell;
  int epoch = 0;
  bool first = true;
  while (std::getline(ss, cell, ',')) {
    if (first) {
      epoch = std::stoi(cell);
      first = false;
      continue;
    }
    double d = 0.0;
    const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), d);
    if (res.ec != std::errc())
      throw ParseError("metrics row: bad cell '" + cell + "'", 0, v.size() + 2);
    v.push_back(d);
  }
  if (v.size() != modality_count * 8 + 7)
    throw ValidationError("metrics row has the wrong number of columns");
  MetricsRecord r;
  r.epoch = epoch;
  std::size_t k = 0;
  for (std::size_t j = 0; j < modality_count; ++j) {
    ModalityMetrics m;
    m.batch_size = v[k++];
    m.proportion = v[k++];
    m.score_cumulative = v[k++];
    m.score_epoch = v[k++];
    m.train_loss = v[k++];
    m.test.accuracy = v[k++];
    m.test.macro_f1 = v[k++];
    m.test.mean_ap = v[k++];
    r.modalities.push_back(m);
  }
  r.fused.accuracy = v[k++];
  r.fused.macro_f1 = v[k++];
  r.fused.mean_ap = v[k++];
  r.fused_loss = v[k++];
  r.gap = v[k++];
  r.gap_epoch = v[k++];
  r.reward = v[k++];
  return r;
}

std::string to_csv(std::span<const MetricsRecord> records) {
  std::string out = csv_header(records.empty() ? 0 : records.front().modalities.size());
  out += '\n';
  for (const auto& r : records) {
    out += to_csv_row(r);
    out += '\n';
  }
  return out;
}

namespace {

nlohmann::json to_json(const ClassificationMetrics& m) {
  return {{"accuracy", m.accuracy}, {"macro_f1", m.macro_f1}, {"mean_ap", m.mean_ap}};
}

ClassificationMetrics metrics_from_json(const nlohmann::json& j) {
  return {j.at("accuracy").get<double>(), j.at("macro_f1").get<double>(),
          j.at("mean_ap").get<double>()};
}

}  // namespace

nlohmann::json to_json(const MetricsRecord& r) {
  nlohmann::json mods = nlohmann::json::array();
  for (const auto& m : r.modalities)
    mods.push_back({{"batch_size", m.batch_size},
                    {"proportion", m.proportion},
                    {"score_cumulative", m.score_cumulative},
                    {"score_epoch", m.score_epoch},
                    {"train_loss", m.train_loss},
                    {"test", to_json(m.test)}});
  return {{"epoch", r.epoch},
          {"modalities", std::move(mods)},
          {"fused", to_json(r.fused)},
          {"fused_loss", r.fused_loss},
          {"gap", r.gap},
          {"gap_epoch", r.gap_epoch},
          {"reward", r.reward},
          {"wall_clock_seconds", r.wall_clock_seconds}};
}

MetricsRecord record_from_json(const nlohmann::json& j) {
  MetricsRecord r;
  r.epoch = j.at("epoch").get<int>();
  for (const auto& m : j.at("modalities")) {
    ModalityMetrics mm;
    mm.batch_size = m.at("batch_size").get<double>();
    mm.proportion = m.at("proportion").get<double>();
    mm.score_cumulative = m.at("score_cumulative").get<double>();
    mm.score_epoch = m.at("score_epoch").get<double>();
    mm.train_loss = m.at("train_loss").get<double>();
    mm.test = metrics_from_json(m.at("test"));
    r.modalities.push_back(mm);
  }
  r.fused = metrics_from_json(j.at("fused"));
  r.fused_loss = j.at("fused_loss").get<double>();
  r.gap = j.at("gap").get<double>();
  r.gap_epoch = j.at("gap_epoch").get<double>();
  r.reward = j.at("reward").get<double>();
  r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
  return r;
}

}  // namespace dus
