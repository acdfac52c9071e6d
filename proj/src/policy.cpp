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

#include "dus/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dus/data.hpp"
#include "dus/errors.hpp"

namespace dus {
namespace {

constexpr double kScoreFloor = 1e-6;

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::ranges::max_element(v) - v.begin());
}

}  // namespace

void validate_proportions(std::span<const double> proportions) {
  if (proportions.empty()) throw ValidationError("empty proportion vector");
  double sum = 0.0;
  for (double p : proportions) {
    if (!(p > 0.0 && p < 1.0) && !(proportions.size() == 1 && p == 1.0))
      throw ValidationError("proportion outside (0, 1)");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw ValidationError("proportions do not sum to 1");
}

HeuristicParams HeuristicParams::with_auto_alpha(double beta, int max_epoch,
                                                 std::size_t base_batch) {
  if (!(beta > 0.0 && beta <= 1.0))
    throw ValidationError("heuristic beta must lie in (0, 1]");
  if (max_epoch < 1) throw ValidationError("heuristic T_max must be >= 1");
  return {std::log(1.0 / beta) / static_cast<double>(max_epoch), beta,
          max_epoch, base_batch};
}

void HeuristicParams::validate() const {
  if (!(beta > 0.0 && beta <= 1.0))
    throw ValidationError("heuristic beta must lie in (0, 1]");
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw ValidationError("heuristic alpha must be a non-negative real");
  if (max_epoch < 1) throw ValidationError("heuristic T_max must be >= 1");
  if (base_batch < 1) throw ValidationError("heuristic N_B must be >= 1");
}

std::size_t heuristic_batch(int epoch, const HeuristicParams& p) {
  p.validate();
  if (epoch < 0 || epoch > p.max_epoch)
    throw ValidationError("heuristic epoch " + std::to_string(epoch) +
                          " outside [0, " + std::to_string(p.max_epoch) + "]");
  const double raw = std::round(p.beta * std::exp(p.alpha * epoch) *
                                static_cast<double>(p.base_batch));
  return std::clamp(static_cast<std::size_t>(std::max(raw, 1.0)), std::size_t{1},
                    p.base_batch);
}

ActionVector proportions_to_action(std::span<const double> proportions,
                                   std::size_t budget, Rounding rounding,
                                   std::size_t max_batch) {
  const double nb = static_cast<double>(budget);
  ActionVector a(proportions.size());
  if (rounding == Rounding::kIndependent) {
    for (std::size_t j = 0; j < a.size(); ++j)
      a[j] = static_cast<std::size_t>(std::max(std::round(nb * proportions[j]), 0.0));
  } else {
    std::vector<double> remainder(a.size());
    std::size_t assigned = 0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      const double share = nb * proportions[j];
      a[j] = static_cast<std::size_t>(std::max(std::floor(share), 0.0));
      remainder[j] = share - std::floor(share);
      assigned += a[j];
    }
    std::vector<std::size_t> order(a.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::stable_sort(order, [&](std::size_t l, std::size_t r) {
      return remainder[l] > remainder[r];
    });
    for (std::size_t k = 0; assigned < budget && k < order.size(); ++k, ++assigned)
      ++a[order[k]];
  }
  for (auto& v : a) v = std::clamp(v, std::size_t{1}, std::max<std::size_t>(max_batch, 1));
  if (rounding == Rounding::kLargestRemainder) {
    // Raising a share to 1 may overshoot the budget; take it back from the
    // largest allocations.
    std::size_t total = std::accumulate(a.begin(), a.end(), std::size_t{0});
    while (total > budget) {
      auto it = std::ranges::max_element(a);
      if (*it <= 1) break;
      --*it;
      --total;
    }
  }
  return a;
}

double reward(std::span<const double> state, std::span<const double> proportions) {
  if (state.size() != proportions.size() || state.empty())
    throw ValidationError("reward: state/proportion length mismatch");
  for (double p : proportions)
    if (!(p > 0.0)) throw ValidationError("reward: proportion must be positive");
  const double best = *std::ranges::max_element(state);
  double r = 0.0;
  for (std::size_t j = 0; j < state.size(); ++j)
    if (state[j] != best) r -= std::log(proportions[j]);
  return r / static_cast<double>(state.size());
}

std::vector<double> discrepancy_proportional(std::span<const double> state) {
  if (state.empty()) throw ValidationError("discrepancy_proportional: empty state");
  std::vector<double> p(state.size());
  double total = 0.0;
  for (std::size_t j = 0; j < state.size(); ++j) {
    p[j] = 1.0 / std::max(state[j], kScoreFloor);
    total += p[j];
  }
  for (double& v : p) v /= total;
  return p;
}

PolicyNet PolicyNet::make(std::size_t modality_count, std::size_t hidden,
                          double sigma, double learning_rate, Rng& rng) {
  if (!(sigma > 0.0)) throw ValidationError("policy sigma must be positive");
  if (!(learning_rate >= 0.0))
    throw ValidationError("policy learning rate must be non-negative");
  if (modality_count == 0 || hidden == 0)
    throw ValidationError("policy network needs positive widths");
  PolicyNet p;
  p.net.layers.push_back(make_layer(modality_count, hidden, rng));
  p.net.layers.push_back(zero_layer(hidden, modality_count));
  p.sigma = sigma;
  p.learning_rate = learning_rate;
  return p;
}

PolicyAction policy_act(const PolicyNet& policy, std::span<const double> state,
                        Rng& rng) {
  if (state.size() != policy.net.input_dim())
    throw DimensionError("policy_act: state dimension does not match policy");
  PolicyAction act;
  act.state.assign(state.begin(), state.end());
  const Matrix mean = predict_logits(
      policy.net, Matrix(1, state.size(), std::vector<double>(act.state)));
  act.mean.assign(mean.values().begin(), mean.values().end());
  GaussianDraw draw = gaussian_sample_logprob(act.mean, policy.sigma, rng);
  act.sample = std::move(draw.sample);
  act.logprob = draw.logprob;
  act.proportions = softmax(act.sample);
  return act;
}

Gradients logprob_gradient(const PolicyNet& policy, const PolicyAction& action) {
  const std::size_t m = action.state.size();
  ForwardCache cache =
      forward(policy.net, Matrix(1, m, std::vector<double>(action.state)));
  // d/dmu log N(u; mu, sigma^2 I) = (u - mu) / sigma^2
  Matrix dmean(1, policy.net.output_dim());
  const double inv_var = 1.0 / (policy.sigma * policy.sigma);
  for (std::size_t k = 0; k < dmean.cols(); ++k)
    dmean(0, k) = (action.sample[k] - cache.logits()(0, k)) * inv_var;
  Gradients grads = zero_gradients(policy.net);
  backward(policy.net, cache, dmean, grads);
  return grads;
}

void reinforce_update(PolicyNet& policy, double r, const PolicyAction& action,
                      std::span<const double> state) {
  if (!std::ranges::equal(state, action.state))
    throw ValidationError("reinforce_update: cached action belongs to a different state");
  if (r == 0.0 || policy.learning_rate == 0.0) return;
  const Gradients grads = logprob_gradient(policy, action);
  const double step = policy.learning_rate * r;
  for (std::size_t k = 0; k < policy.net.layers.size(); ++k) {
    auto w = policy.net.layers[k].weight.values();
    auto gw = grads[k].weight.values();
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= step * gw[i];
    auto& b = policy.net.layers[k].bias;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] -= step * grads[k].bias[i];
  }
}

std::string_view to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::kEqual: return "equal";
    case StrategyKind::kHeuristic: return "heuristic";
    case StrategyKind::kDiscProp: return "discprop";
    case StrategyKind::kReinforce: return "reinforce";
  }
  return "unknown";
}

std::optional<StrategyKind> parse_strategy(std::string_view name) {
  for (auto k : {StrategyKind::kEqual, StrategyKind::kHeuristic,
                 StrategyKind::kDiscProp, StrategyKind::kReinforce})
    if (name == to_string(k)) return k;
  return std::nullopt;
}

SamplingStrategy::SamplingStrategy(const StrategyConfig& config,
                                   std::size_t modality_count,
                                   std::size_t dataset_size)
    : config_(config), modality_count_(modality_count), dataset_size_(dataset_size) {
  if (modality_count_ == 0) throw ValidationError("strategy: no modalities");
  if (config_.batch_budget < modality_count_)
    throw ValidationError("strategy: batch budget must be at least the modality count");
  if (dataset_size_ == 0) throw ValidationError("strategy: empty dataset");
}

ActionVector SamplingStrategy::initial_action() const {
  return ActionVector(modality_count_, clamp_batch(per_modality()));
}

std::size_t SamplingStrategy::clamp_batch(std::size_t a) const {
  return std::clamp(a, std::size_t{1}, dataset_size_);
}

EpochDecision EqualStrategy::next_action(int, std::span<const double>) {
  return {initial_action(), {}, 0.0};
}

HeuristicStrategy::HeuristicStrategy(const StrategyConfig& config,
                                     std::size_t modality_count,
                                     std::size_t dataset_size)
    : SamplingStrategy(config, modality_count, dataset_size) {
  const int max_epoch = std::max(config.epochs - 2, 1);
  params_ = HeuristicParams::with_auto_alpha(config.beta, max_epoch, per_modality());
  if (config.alpha) params_.alpha = *config.alpha;
  params_.validate();
}

EpochDecision HeuristicStrategy::next_action(int finished_epoch,
                                             std::span<const double> state) {
  if (state.size() != modality_count_)
    throw ValidationError("heuristic: state dimension mismatch");
  const int t = std::clamp(finished_epoch - 1, 0, params_.max_epoch);
  ActionVector a = initial_action();
  a[argmax(state)] = clamp_batch(heuristic_batch(t, params_));
  return {std::move(a), {}, 0.0};
}

EpochDecision DiscPropStrategy::next_action(int, std::span<const double> state) {
  if (state.size() != modality_count_)
    throw ValidationError("discprop: state dimension mismatch");
  EpochDecision d;
  d.proportions = discrepancy_proportional(state);
  d.action = proportions_to_action(d.proportions, config_.batch_budget,
                                   config_.rounding, dataset_size_);
  d.reward = reward(state, d.proportions);
  return d;
}

ReinforceStrategy::ReinforceStrategy(const StrategyConfig& config,
                                     std::size_t modality_count,
                                     std::size_t dataset_size)
    : SamplingStrategy(config, modality_count, dataset_size),
      rng_(derive_seed(config.seed, 0x5151)) {
  policy_ = PolicyNet::make(modality_count, config.policy_hidden,
                            config.policy_sigma, config.policy_learning_rate, rng_);
}

EpochDecision ReinforceStrategy::next_action(int, std::span<const double> state) {
  PolicyAction act = policy_act(policy_, state, rng_);
  EpochDecision d;
  d.action = proportions_to_action(act.proportions, config_.batch_budget,
                                   config_.rounding, dataset_size_);
  d.reward = reward(act.state, act.proportions);
  reinforce_update(policy_, d.reward, act, state);
  d.proportions = std::move(act.proportions);
  return d;
}

std::unique_ptr<SamplingStrategy> make_strategy(const StrategyConfig& config,
                                                std::size_t modality_count,
                                                std::size_t dataset_size) {
  switch (config.kind) {
    case StrategyKind::kEqual:
      return std::make_unique<EqualStrategy>(config, modality_count, dataset_size);
    case StrategyKind::kHeuristic:
      return std::make_unique<HeuristicStrategy>(config, modality_count, dataset_size);
    case StrategyKind::kDiscProp:
      return std::make_unique<DiscPropStrategy>(config, modality_count, dataset_size);
    case StrategyKind::kReinforce:
      return std::make_unique<ReinforceStrategy>(config, modality_count, dataset_size);
  }
  throw ValidationError("unknown strategy");
}

}  // namespace dus
