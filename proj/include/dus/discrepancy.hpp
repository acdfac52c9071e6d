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

#ifndef DUS_DISCREPANCY_HPP_
#define DUS_DISCREPANCY_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dus/numerics.hpp"

namespace dus {

enum class ScoreMode { kCumulative, kInstantaneous };

// Mean probability assigned to the true class: (1/n) sum_i p_i[y_i].
// Throws ValidationError if a row is off the simplex by more than 1e-6 or
// the batch is empty.
double batch_score(const Matrix& probs, std::span<const int> labels);
// Same, with labels given as one-hot rows.
double batch_score(const Matrix& probs, const Matrix& one_hot);

// Running confidence of each modality on its own training batches.
//
// The cumulative score follows
//   s_hat_1 = s_1,  s_hat_t = ((t - 1) / t) s_hat_{t-1} + s_t / t
// with t counted globally over the whole run (never reset). A second
// running mean restarted by begin_epoch() is kept alongside so the per-epoch
// reading of t can be logged too.
class DiscrepancyTracker {
 public:
  explicit DiscrepancyTracker(std::size_t modality_count,
                              ScoreMode mode = ScoreMode::kCumulative);

  // Feed one score per modality; returns the new state vector.
  std::vector<double> update(std::span<const double> scores);
  // Feed a single modality (alternating schedules update one at a time).
  void update_modality(std::size_t j, double score);

  void begin_epoch();

  // What the sampling policy observes: the cumulative scores, or the latest
  // raw batch scores in instantaneous mode.
  std::vector<double> state() const;
  const std::vector<double>& cumulative() const { return cumulative_; }
  const std::vector<double>& epoch_mean() const { return epoch_mean_; }
  const std::vector<double>& last() const { return last_; }

  std::size_t modality_count() const { return cumulative_.size(); }
  std::uint64_t updates(std::size_t j) const { return count_.at(j); }
  ScoreMode mode() const { return mode_; }

 private:
  ScoreMode mode_;
  std::vector<double> cumulative_;
  std::vector<double> epoch_mean_;
  std::vector<double> last_;
  std::vector<std::uint64_t> count_;
  std::vector<std::uint64_t> epoch_count_;
};

// |max_j s_j - min_j s_j|.
double discrepancy_gap(std::span<const double> scores);

}  // namespace dus

#endif  // DUS_DISCREPANCY_HPP_
