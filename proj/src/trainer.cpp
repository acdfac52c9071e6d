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

#include "dus/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dus/errors.hpp"

namespace dus {
namespace {

bool finite_all(std::span<const double> v) {
  return std::ranges::all_of(v, [](double x) { return std::isfinite(x); });
}

}  // namespace

std::string_view to_string(MmlMode m) {
  return m == MmlMode::kJoint ? "joint" : "alternating";
}

std::string_view to_string(ScoreMode m) {
  return m == ScoreMode::kCumulative ? "cumulative" : "instantaneous";
}

std::string_view to_string(Rounding r) {
  return r == Rounding::kIndependent ? "independent" : "largest_remainder";
}

void TrainConfig::validate(std::size_t modality_count) const {
  if (epochs < 1) throw ValidationError("epochs: must be >= 1");
  if (batch_budget < modality_count)
    throw ValidationError("batch_budget: must be >= the number of modalities (" +
                          std::to_string(modality_count) + ")");
  if (hidden == 0) throw ValidationError("hidden: must be positive");
  if (!(optimizer.learning_rate >= 0.0))
    throw ValidationError("optimizer.learning_rate: must be non-negative");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0))
    throw ValidationError("optimizer.momentum: must lie in [0, 1)");
  if (!(optimizer.weight_decay >= 0.0))
    throw ValidationError("optimizer.weight_decay: must be non-negative");
  if (!(beta > 0.0 && beta <= 1.0))
    throw ValidationError("policy.beta: must lie in (0, 1]");
  if (alpha && !(*alpha > 0.0)) throw ValidationError("policy.alpha: must be positive");
  if (policy_hidden == 0) throw ValidationError("policy.hidden: must be positive");
  if (!(policy_sigma > 0.0)) throw ValidationError("policy.sigma: must be positive");
  if (!(policy_learning_rate >= 0.0))
    throw ValidationError("policy.learning_rate: must be non-negative");
}

StrategyConfig TrainConfig::strategy_config() const {
  StrategyConfig s;
  s.kind = strategy;
  s.batch_budget = batch_budget;
  s.rounding = rounding;
  s.epochs = epochs;
  s.beta = beta;
  s.alpha = alpha;
  s.policy_hidden = policy_hidden;
  s.policy_sigma = policy_sigma;
  s.policy_learning_rate = policy_learning_rate;
  s.seed = derive_seed(seed, 13);
  return s;
}

ModelBundle ModelBundle::make(std::span<const std::size_t> input_dims, int classes,
                              std::size_t hidden, const OptimizerConfig& opt,
                              Rng& rng) {
  ModelBundle b;
  for (std::size_t d : input_dims) {
    const std::size_t widths[] = {d, hidden, static_cast<std::size_t>(classes)};
    b.networks.push_back(make_network(widths, rng));
    b.optimizers.push_back(SgdState::for_network(b.networks.back(), opt.learning_rate,
                                                 opt.momentum, opt.weight_decay));
  }
  return b;
}

Matrix fuse_logits(std::span<const Matrix> logits) {
  if (logits.empty()) throw ValidationError("fuse_logits: no modalities");
  Matrix out(logits.front().rows(), logits.front().cols());
  for (const auto& z : logits) {
    if (z.rows() != out.rows() || z.cols() != out.cols())
      throw ValidationError("fuse_logits: logit shapes differ across modalities");
    auto dst = out.values();
    auto src = z.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
  const double inv = 1.0 / static_cast<double>(logits.size());
  for (double& v : out.values()) v *= inv;
  return out;
}

std::vector<double> fuse_predict(std::span<const std::vector<double>> logits) {
  std::vector<Matrix> rows;
  rows.reserve(logits.size());
  for (const auto& z : logits) rows.emplace_back(1, z.size(), z);
  const Matrix fused = fuse_logits(rows);
  return softmax(fused.values());
}

EvalReport evaluate(const ModelBundle& model, const MultimodalDataset& split) {
  if (split.size() == 0) throw ValidationError("evaluate: empty split");
  if (split.modality_count() != model.modality_count())
    throw DimensionError("evaluate: modality count mismatch");
  EvalReport report;
  std::vector<Matrix> logits;
  for (std::size_t j = 0; j < model.modality_count(); ++j) {
    logits.push_back(predict_logits(model.networks[j], split.modalities[j]));
    report.unimodal.push_back(classification_metrics(softmax_rows(logits.back()),
                                                     split.labels, split.num_classes));
  }
  report.fused = classification_metrics(softmax_rows(fuse_logits(logits)), split.labels,
                                        split.num_classes);
  return report;
}

namespace {

// Batch confidence, or NaN once the logits stop being finite so that the
// caller's divergence check sees it.
double confidence(const Matrix& logits, std::span<const int> labels) {
  if (!all_finite(logits)) return std::numeric_limits<double>::quiet_NaN();
  return batch_score(softmax_rows(logits), labels);
}

}  // namespace

StepResult joint_step(ModelBundle& model, std::span<const ModalityBatch> batches,
                      const PairedBatch* paired) {
  const std::size_t m = model.modality_count();
  if (batches.size() != m) throw ValidationError("joint_step: one batch per modality");
  StepResult out;
  std::vector<Gradients> grads;
  for (std::size_t j = 0; j < m; ++j) {
    const Network& net = model.networks[j];
    grads.push_back(zero_gradients(net));
    ForwardCache cache = forward(net, batches[j].features);
    Matrix dlogits;
    out.losses.push_back(softmax_cross_entropy(cache.logits(), batches[j].labels, dlogits));
    out.scores.push_back(confidence(cache.logits(), batches[j].labels));
    backward(net, cache, dlogits, grads[j]);
  }
  if (paired != nullptr && m > 1 && paired->size() > 0) {
    std::vector<ForwardCache> caches;
    std::vector<Matrix> logits;
    for (std::size_t j = 0; j < m; ++j) {
      caches.push_back(forward(model.networks[j], paired->features[j]));
      logits.push_back(caches.back().logits());
    }
    Matrix dfused;
    // d(mean_j z_j)/dz_j = 1/m
    out.fused_loss = softmax_cross_entropy(fuse_logits(logits), paired->labels, dfused,
                                           1.0 / static_cast<double>(m));
    for (std::size_t j = 0; j < m; ++j)
      backward(model.networks[j], caches[j], dfused, grads[j]);
  }
  for (std::size_t j = 0; j < m; ++j) model.optimizers[j].step(model.networks[j], grads[j]);
  return out;
}

AlternatingTrace alternating_step(ModelBundle& model,
                                  std::span<const ModalityBatch> batches,
                                  DiscrepancyTracker& tracker) {
  const std::size_t m = model.modality_count();
  if (batches.size() != m)
    throw ValidationError("alternating_step: one batch per modality");
  AlternatingTrace trace;
  for (std::size_t j = 0; j < m; ++j) {
    Network& net = model.networks[j];
    ForwardCache cache = forward(net, batches[j].features);
    Matrix dlogits;
    trace.step.losses.push_back(
        softmax_cross_entropy(cache.logits(), batches[j].labels, dlogits));
    const double s = confidence(cache.logits(), batches[j].labels);
    trace.step.scores.push_back(s);
    tracker.update_modality(j, s);
    trace.tracker_after_phase.push_back(tracker.state());
    Gradients grads = zero_gradients(net);
    backward(net, cache, dlogits, grads);
    model.optimizers[j].step(net, grads);
  }
  return trace;
}

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_budget,
                              std::size_t modality_count) {
  const std::size_t per = std::max<std::size_t>(batch_budget / modality_count, 1);
  return (n + per - 1) / per;
}

TrainResult train(const MultimodalDataset& train_split,
                  const MultimodalDataset& test_split, const TrainConfig& config) {
  const std::size_t m = train_split.modality_count();
  config.validate(m);
  train_split.validate();
  if (test_split.size() == 0) throw ValidationError("test split is empty");
  if (test_split.modality_count() != m)
    throw ValidationError("train and test splits have different modality counts");

  std::vector<std::size_t> dims;
  for (const auto& x : train_split.modalities) dims.push_back(x.cols());
  Rng init_rng(derive_seed(config.seed, 11));

  TrainResult result;
  result.model = ModelBundle::make(dims, train_split.num_classes, config.hidden,
                                   config.optimizer, init_rng);
  ModelBundle& model = result.model;
  auto strategy = make_strategy(config.strategy_config(), m, train_split.size());
  BatchSampler sampler(train_split.size(), m, derive_seed(config.seed, 12));
  DiscrepancyTracker tracker(m, config.score_mode);

  ActionVector action = strategy->initial_action();
  const std::size_t steps = batches_per_epoch(train_split.size(), config.batch_budget, m);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    tracker.begin_epoch();
    std::vector<double> loss_sum(m, 0.0);
    double fused_sum = 0.0;

    for (std::size_t it = 0; it < steps; ++it) {
      std::vector<ModalityBatch> batches;
      batches.reserve(m);
      for (std::size_t j = 0; j < m; ++j)
        batches.push_back(sampler.sample_batch(train_split, j, action[j]));

      StepResult step;
      if (config.mml_mode == MmlMode::kJoint) {
        std::optional<PairedBatch> paired;
        if (m > 1) paired = sampler.paired_subbatch(train_split, batches);
        step = joint_step(model, batches, paired ? &*paired : nullptr);
        if (!finite_all(step.losses) || !finite_all(step.scores) ||
            !std::isfinite(step.fused_loss)) {
          result.diverged = true;
        } else {
          tracker.update(step.scores);
        }
      } else {
        step = alternating_step(model, batches, tracker).step;
        result.diverged = !finite_all(step.losses) || !finite_all(step.scores);
      }
      if (result.diverged) {
        std::ostringstream msg;
        msg << "non-finite loss at epoch " << epoch << ", iteration " << it + 1
            << "; batch sizes";
        for (auto a : action) msg << ' ' << a;
        result.diagnostic = msg.str();
        result.epoch_actions.push_back(action);
        return result;
      }
      result.iteration_scores.push_back(step.scores);
      for (std::size_t j = 0; j < m; ++j) loss_sum[j] += step.losses[j];
      fused_sum += step.fused_loss;
    }

    const EvalReport eval = evaluate(model, test_split);
    EpochDecision decision;
    try {
      decision = strategy->next_action(epoch, tracker.state());
    } catch (const ValidationError& e) {
      result.diverged = true;
      result.diagnostic = "sampling policy failed after epoch " +
                          std::to_string(epoch) + ": " + e.what();
      result.epoch_actions.push_back(action);
      return result;
    }

    MetricsRecord rec;
    rec.epoch = epoch;
    const double total =
        static_cast<double>(std::accumulate(action.begin(), action.end(), std::size_t{0}));
    const double inv_steps = 1.0 / static_cast<double>(steps);
    for (std::size_t j = 0; j < m; ++j) {
      ModalityMetrics mm;
      mm.batch_size = static_cast<double>(action[j]);
      mm.proportion = static_cast<double>(action[j]) / total;
      mm.score_cumulative = tracker.cumulative()[j];
      mm.score_epoch = tracker.epoch_mean()[j];
      mm.train_loss = loss_sum[j] * inv_steps;
      mm.test = eval.unimodal[j];
      rec.modalities.push_back(mm);
    }
    rec.fused = eval.fused;
    rec.fused_loss = fused_sum * inv_steps;
    rec.gap = discrepancy_gap(tracker.cumulative());
    rec.gap_epoch = discrepancy_gap(tracker.epoch_mean());
    rec.reward = decision.reward;
    rec.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.records.push_back(std::move(rec));
    result.epoch_actions.push_back(action);
    action = std::move(decision.action);
  }
  return result;
}

}  // namespace dus
