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

#ifndef DUS_TRAINER_HPP_
#define DUS_TRAINER_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dus/data.hpp"
#include "dus/discrepancy.hpp"
#include "dus/metrics.hpp"
#include "dus/numerics.hpp"
#include "dus/policy.hpp"

namespace dus {

enum class MmlMode { kJoint, kAlternating };
enum class Fusion { kLateMeanLogits };

std::string_view to_string(MmlMode m);
std::string_view to_string(ScoreMode m);
std::string_view to_string(Rounding r);

struct OptimizerConfig {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_budget = 128;  // N_B, summed over modalities
  StrategyKind strategy = StrategyKind::kEqual;
  MmlMode mml_mode = MmlMode::kJoint;
  ScoreMode score_mode = ScoreMode::kCumulative;
  Fusion fusion = Fusion::kLateMeanLogits;
  Rounding rounding = Rounding::kIndependent;
  std::size_t hidden = 32;
  OptimizerConfig optimizer;

  double beta = 0.5;
  std::optional<double> alpha;
  std::size_t policy_hidden = 16;
  double policy_sigma = 0.5;
  double policy_learning_rate = 1e-4;

  std::uint64_t seed = 0;

  // Throws ValidationError naming the offending field.
  void validate(std::size_t modality_count) const;
  StrategyConfig strategy_config() const;
};

// Per modality: encoder (linear + ReLU) followed by a linear head to the
// class logits, each with its own momentum-SGD state.
struct ModelBundle {
  std::vector<Network> networks;
  std::vector<SgdState> optimizers;

  static ModelBundle make(std::span<const std::size_t> input_dims, int classes,
                          std::size_t hidden, const OptimizerConfig& opt, Rng& rng);
  std::size_t modality_count() const { return networks.size(); }
};

// Element-wise mean of the modality logits.
Matrix fuse_logits(std::span<const Matrix> logits);
// softmax(mean_j z_j) for a single sample. Throws ValidationError when the
// logit vectors differ in length.
std::vector<double> fuse_predict(std::span<const std::vector<double>> logits);

struct EvalReport {
  std::vector<ClassificationMetrics> unimodal;
  ClassificationMetrics fused;
};

EvalReport evaluate(const ModelBundle& model, const MultimodalDataset& split);

struct StepResult {
  std::vector<double> losses;  // unimodal, per modality
  std::vector<double> scores;  // batch confidence, per modality
  double fused_loss = 0.0;
};

// Sum of unimodal losses on the (unequal) batches plus the fused loss on
// the paired sub-batch, one SGD step per modality network. With a single
// modality the fused term duplicates the unimodal one and is skipped.
StepResult joint_step(ModelBundle& model, std::span<const ModalityBatch> batches,
                      const PairedBatch* paired);

struct AlternatingTrace {
  StepResult step;
  // Tracker state right after each modality's phase.
  std::vector<std::vector<double>> tracker_after_phase;
};

// Round robin over modalities: forward, score into the tracker, backward and
// step on the unimodal loss only.
AlternatingTrace alternating_step(ModelBundle& model,
                                  std::span<const ModalityBatch> batches,
                                  DiscrepancyTracker& tracker);

struct TrainResult {
  ModelBundle model;
  std::vector<MetricsRecord> records;
  std::vector<ActionVector> epoch_actions;  // allocation used in each epoch
  std::vector<std::vector<double>> iteration_scores;  // raw batch scores
  bool diverged = false;
  std::string diagnostic;
};

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_budget,
                              std::size_t modality_count);

TrainResult train(const MultimodalDataset& train_split,
                  const MultimodalDataset& test_split, const TrainConfig& config);

}  // namespace dus

#endif  // DUS_TRAINER_HPP_
