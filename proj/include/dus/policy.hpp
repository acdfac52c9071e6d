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

// Per-modality batch-size allocation. Four strategies share one interface:
// equal split, an exponential warm-up schedule for the dominant modality,
// inverse-confidence proportions, and a Gaussian policy network trained
// with single-sample REINFORCE.

#ifndef DUS_POLICY_HPP_
#define DUS_POLICY_HPP_

#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "dus/numerics.hpp"

namespace dus {

// Batch size per modality; every entry >= 1.
using ActionVector = std::vector<std::size_t>;

// Entries in (0, 1) summing to 1 within 1e-9. Throws ValidationError.
void validate_proportions(std::span<const double> proportions);

struct HeuristicParams {
  double alpha = 0.0;
  double beta = 0.5;
  int max_epoch = 1;  // T_max
  std::size_t base_batch = 64;  // N_B for the schedule

  // alpha = ln(1 / beta) / T_max, so that f(T_max) = base_batch.
  static HeuristicParams with_auto_alpha(double beta, int max_epoch,
                                         std::size_t base_batch);
  void validate() const;
};

// f(T) = round(beta * exp(alpha * T) * N_B), clamped to [1, N_B]. Throws
// ValidationError unless 0 <= T <= T_max.
std::size_t heuristic_batch(int epoch, const HeuristicParams& p);

enum class Rounding {
  kIndependent,  // round each share on its own; the sum may drift from N_B
  kLargestRemainder,  // floor, then hand leftover units to the largest remainders
};

// a_j = round(N_B * p_j), clamped to [1, max_batch].
ActionVector proportions_to_action(
    std::span<const double> proportions, std::size_t budget,
    Rounding rounding = Rounding::kIndependent,
    std::size_t max_batch = std::numeric_limits<std::size_t>::max());

// r = -(1/m) sum_j 1(s_j != max_k s_k) log(p_j). Non-negative; zero when
// every modality ties for the maximum.
double reward(std::span<const double> state, std::span<const double> proportions);

// p_j proportional to 1 / max(s_j, 1e-6).
std::vector<double> discrepancy_proportional(std::span<const double> state);

// Maps a state vector to mean logits; actions are softmax(mean + sigma * eps).
struct PolicyNet {
  Network net;
  double sigma = 0.5;
  double learning_rate = 1e-4;

  // m -> hidden (ReLU) -> m. The output layer starts at zero so the initial
  // mean proportions are uniform.
  static PolicyNet make(std::size_t modality_count, std::size_t hidden,
                        double sigma, double learning_rate, Rng& rng);
};

struct PolicyAction {
  std::vector<double> proportions;
  double logprob = 0.0;
  std::vector<double> sample;  // pre-softmax draw
  std::vector<double> mean;
  std::vector<double> state;  // input the draw was made for
};

PolicyAction policy_act(const PolicyNet& policy, std::span<const double> state,
                        Rng& rng);

// Gradient of the Gaussian log-density of action.sample with respect to the
// policy parameters, backpropagated through the mean network.
Gradients logprob_gradient(const PolicyNet& policy, const PolicyAction& action);

// Single-sample REINFORCE step with the score-function estimator
// r * grad log-density. reward() is a penalty on starving non-dominant
// modalities, so the step moves against it:
//   w <- w - lr * r * grad log-density
// Throws ValidationError if `action` was not drawn for `state`.
void reinforce_update(PolicyNet& policy, double r, const PolicyAction& action,
                      std::span<const double> state);

enum class StrategyKind { kEqual, kHeuristic, kDiscProp, kReinforce };

std::string_view to_string(StrategyKind k);
std::optional<StrategyKind> parse_strategy(std::string_view name);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kEqual;
  std::size_t batch_budget = 128;  // N_B, total over modalities
  Rounding rounding = Rounding::kIndependent;
  int epochs = 30;
  double beta = 0.5;
  std::optional<double> alpha;  // derived from beta and epochs when unset
  std::size_t policy_hidden = 16;
  double policy_sigma = 0.5;
  double policy_learning_rate = 1e-4;
  std::uint64_t seed = 0;
};

struct EpochDecision {
  ActionVector action;
  std::vector<double> proportions;  // empty for strategies without one
  double reward = 0.0;
};

class SamplingStrategy {
 public:
  SamplingStrategy(const StrategyConfig& config, std::size_t modality_count,
                   std::size_t dataset_size);
  virtual ~SamplingStrategy() = default;

  virtual StrategyKind kind() const = 0;

  // (N_B / m, ..., N_B / m), used for the first epoch by every strategy.
  ActionVector initial_action() const;

  // Called once epoch `finished_epoch` (1-based) is over with the tracker
  // state; returns the allocation for the following epoch.
  virtual EpochDecision next_action(int finished_epoch,
                                    std::span<const double> state) = 0;

 protected:
  std::size_t per_modality() const { return config_.batch_budget / modality_count_; }
  std::size_t clamp_batch(std::size_t a) const;

  StrategyConfig config_;
  std::size_t modality_count_;
  std::size_t dataset_size_;
};

class EqualStrategy final : public SamplingStrategy {
 public:
  using SamplingStrategy::SamplingStrategy;
  StrategyKind kind() const override { return StrategyKind::kEqual; }
  EpochDecision next_action(int finished_epoch,
                            std::span<const double> state) override;
};

// The modality with the highest score receives f(T), everyone else N_B / m.
// Epoch 1 is an equal warm-up; epoch E >= 2 uses T = E - 2 so the final
// epoch lands on T_max = epochs - 2 and the allocation is equal again.
class HeuristicStrategy final : public SamplingStrategy {
 public:
  HeuristicStrategy(const StrategyConfig& config, std::size_t modality_count,
                    std::size_t dataset_size);
  StrategyKind kind() const override { return StrategyKind::kHeuristic; }
  EpochDecision next_action(int finished_epoch,
                            std::span<const double> state) override;
  const HeuristicParams& params() const { return params_; }

 private:
  HeuristicParams params_;
};

class DiscPropStrategy final : public SamplingStrategy {
 public:
  using SamplingStrategy::SamplingStrategy;
  StrategyKind kind() const override { return StrategyKind::kDiscProp; }
  EpochDecision next_action(int finished_epoch,
                            std::span<const double> state) override;
};

// act -> reward -> update once per epoch; the sampled action is used for
// the whole next epoch.
class ReinforceStrategy final : public SamplingStrategy {
 public:
  ReinforceStrategy(const StrategyConfig& config, std::size_t modality_count,
                    std::size_t dataset_size);
  StrategyKind kind() const override { return StrategyKind::kReinforce; }
  EpochDecision next_action(int finished_epoch,
                            std::span<const double> state) override;
  const PolicyNet& policy() const { return policy_; }

 private:
  Rng rng_;
  PolicyNet policy_;
};

std::unique_ptr<SamplingStrategy> make_strategy(const StrategyConfig& config,
                                                std::size_t modality_count,
                                                std::size_t dataset_size);

}  // namespace dus

#endif  // DUS_POLICY_HPP_
