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

#include "dus/discrepancy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dus/errors.hpp"

namespace dus {
namespace {

constexpr double kSimplexTolerance = 1e-6;

void check_simplex_row(std::span<const double> p, std::size_t i) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= -kSimplexTolerance) || !(v <= 1.0 + kSimplexTolerance))
      throw ValidationError("batch_score: row " + std::to_string(i) +
                            " has an entry outside [0, 1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSimplexTolerance)
    throw ValidationError("batch_score: row " + std::to_string(i) +
                          " does not sum to 1");
}

// s_hat <- ((t - 1) / t) s_hat + s / t, where t counts the new score.
double running_mean(double mean, double score, std::uint64_t t) {
  if (t == 1) return score;
  const double td = static_cast<double>(t);
  return ((td - 1.0) / td) * mean + (1.0 / td) * score;
}

void check_score(double s) {
  if (!(s >= 0.0 && s <= 1.0))
    throw ValidationError("discrepancy score must lie in [0, 1]");
}

}  // namespace

double batch_score(const Matrix& probs, std::span<const int> labels) {
  if (probs.rows() == 0) throw ValidationError("batch_score: empty batch");
  if (labels.size() != probs.rows())
    throw DimensionError("batch_score: labels/probabilities row mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    check_simplex_row(probs.row(i), i);
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= probs.cols())
      throw ValidationError("batch_score: label out of range");
    sum += probs(i, static_cast<std::size_t>(y));
  }
  return std::clamp(sum / static_cast<double>(probs.rows()), 0.0, 1.0);
}

double batch_score(const Matrix& probs, const Matrix& one_hot) {
  if (one_hot.rows() != probs.rows() || one_hot.cols() != probs.cols())
    throw DimensionError("batch_score: one-hot shape mismatch");
  std::vector<int> labels(one_hot.rows());
  for (std::size_t i = 0; i < one_hot.rows(); ++i) {
    auto row = one_hot.row(i);
    const auto hot = std::ranges::count(row, 1.0);
    const auto cold = std::ranges::count(row, 0.0);
    if (hot != 1 || static_cast<std::size_t>(hot + cold) != row.size())
      throw ValidationError("batch_score: label row " + std::to_string(i) +
                            " is not one-hot");
    labels[i] = static_cast<int>(std::ranges::find(row, 1.0) - row.begin());
  }
  return batch_score(probs, labels);
}

DiscrepancyTracker::DiscrepancyTracker(std::size_t modality_count,
                                       ScoreMode mode)
    : mode_(mode),
      cumulative_(modality_count, 0.0),
      epoch_mean_(modality_count, 0.0),
      last_(modality_count, 0.0),
      count_(modality_count, 0),
      epoch_count_(modality_count, 0) {
  if (modality_count == 0)
    throw ValidationError("DiscrepancyTracker: need at least one modality");
}

std::vector<double> DiscrepancyTracker::update(std::span<const double> scores) {
  if (scores.size() != cumulative_.size())
    throw ValidationError("DiscrepancyTracker::update: got " +
                          std::to_string(scores.size()) + " scores for " +
                          std::to_string(cumulative_.size()) + " modalities");
  for (double s : scores) check_score(s);
  for (std::size_t j = 0; j < scores.size(); ++j) update_modality(j, scores[j]);
  return state();
}

void DiscrepancyTracker::update_modality(std::size_t j, double score) {
  if (j >= cumulative_.size())
    throw ValidationError("DiscrepancyTracker: modality index out of range");
  check_score(score);
  last_[j] = score;
  cumulative_[j] = running_mean(cumulative_[j], score, ++count_[j]);
  epoch_mean_[j] = running_mean(epoch_mean_[j], score, ++epoch_count_[j]);
}

void DiscrepancyTracker::begin_epoch() {
  std::ranges::fill(epoch_mean_, 0.0);
  std::ranges::fill(epoch_count_, 0);
}

std::vector<double> DiscrepancyTracker::state() const {
  return mode_ == ScoreMode::kCumulative ? cumulative_ : last_;
}

double discrepancy_gap(std::span<const double> scores) {
  if (scores.empty()) return 0.0;
  const auto [lo, hi] = std::ranges::minmax_element(scores);
  return *hi - *lo;
}

}  // namespace dus
