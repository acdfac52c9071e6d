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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "dus/errors.hpp"
#include "dus/trainer.hpp"

using namespace dus;

namespace {

SyntheticSplits small_data(std::size_t n, double snr1, double snr2, std::uint64_t seed = 1,
                           double scale = 1.0) {
  SyntheticSpec s;
  s.n_train = n;
  s.n_test = 300;
  s.classes = 4;
  s.seed = seed;
  s.modalities = {{8, snr1, scale}, {6, snr2, scale}};
  return generate_synthetic(s);
}

// Per-class F1 and AP written out from their definitions.
double brute_macro_f1(const std::vector<int>& pred, const std::vector<int>& y, int c) {
  double total = 0.0;
  for (int k = 0; k < c; ++k) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      tp += pred[i] == k && y[i] == k;
      fp += pred[i] == k && y[i] != k;
      fn += pred[i] != k && y[i] == k;
    }
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    total += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  return total / c;
}

double brute_ap(const std::vector<double>& score, const std::vector<int>& y, int k) {
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  double hits = 0, sum = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank)
    if (y[order[rank]] == k) {
      hits += 1;
      sum += hits / static_cast<double>(rank + 1);
    }
  return hits > 0 ? sum / hits : 0.0;
}

TrainConfig quick_config(StrategyKind kind, int epochs = 3) {
  TrainConfig c;
  c.epochs = epochs;
  c.strategy = kind;
  c.seed = 5;
  return c;
}

}  // namespace

TEST_CASE("fuse_predict examples") {
  const std::vector<double> z{0.3, -1.2, 2.0};
  const auto same = fuse_predict(std::vector<std::vector<double>>{z, z});
  const auto ref = softmax(z);
  for (std::size_t k = 0; k < 3; ++k) CHECK(same[k] == doctest::Approx(ref[k]).epsilon(1e-14));

  const auto cancel = fuse_predict(std::vector<std::vector<double>>{{1.5, -2, 0.25}, {-1.5, 2, -0.25}});
  for (double v : cancel) CHECK(v == doctest::Approx(1.0 / 3));

  const auto f = fuse_predict(std::vector<std::vector<double>>{{2, 0}, {0, 1}});
  CHECK(std::abs(f[0] - 0.6225) < 1e-4);
  CHECK(std::abs(f[1] - 0.3775) < 1e-4);
  CHECK(f[0] == doctest::Approx(1 / (1 + std::exp(-0.5))).epsilon(1e-14));

  CHECK_THROWS_AS(fuse_predict(std::vector<std::vector<double>>{{1, 2}, {1, 2, 3}}), ValidationError);
}

TEST_CASE("fuse_logits averages element-wise") {
  const std::vector<Matrix> z{Matrix::from_rows({{2, 0}, {1, 1}}), Matrix::from_rows({{0, 1}, {3, -1}})};
  CHECK(fuse_logits(z) == Matrix::from_rows({{1, 0.5}, {2, 0}}));
}

TEST_CASE("classification metrics examples") {
  const Matrix perfect = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 0}});
  const auto p = classification_metrics(perfect, std::vector<int>{0, 1, 2, 0}, 3);
  CHECK(p.accuracy == 1.0);
  CHECK(p.macro_f1 == 1.0);
  CHECK(p.mean_ap == 1.0);

  const Matrix half = Matrix::from_rows({{0.9, 0.1}, {0.8, 0.2}, {0.3, 0.7}, {0.4, 0.6}});
  const auto h = classification_metrics(half, std::vector<int>{0, 1, 0, 1}, 2);
  CHECK(h.accuracy == 0.5);
  CHECK(h.macro_f1 == doctest::Approx(0.5));

  // Class 0 positives ranked first and third.
  const std::vector<double> s0{0.9, 0.8, 0.7, 0.1};
  CHECK(average_precision(s0, std::vector<int>{0, 1, 0, 1}, 0) == doctest::Approx(5.0 / 6.0));
  CHECK(std::abs(average_precision(s0, std::vector<int>{0, 1, 0, 1}, 0) - 0.8333) < 1e-4);

  // A class missing from both labels and predictions contributes zero F1.
  const auto absent = classification_metrics(Matrix::from_rows({{1, 0, 0}, {0, 1, 0}}),
                                             std::vector<int>{0, 1}, 3);
  CHECK(absent.macro_f1 == doctest::Approx(2.0 / 3.0));
  CHECK(absent.mean_ap == 1.0);
}

TEST_CASE("classification metrics agree with brute force on random scores") {
  std::mt19937_64 gen(51);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int c = 2 + static_cast<int>(gen() % 5);
    const std::size_t n = 1 + gen() % 60;
    Matrix scores(n, static_cast<std::size_t>(c));
    std::vector<int> y(n), pred(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(gen() % static_cast<unsigned>(c));
      // Quantised scores force ties in both argmax and ranking.
      for (int k = 0; k < c; ++k) scores(i, static_cast<std::size_t>(k)) = std::floor(u(gen) * 5) / 5;
      pred[i] = static_cast<int>(std::max_element(scores.row(i).begin(), scores.row(i).end()) -
                                 scores.row(i).begin());
    }
    const auto m = classification_metrics(scores, y, c);
    double acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += pred[i] == y[i];
    CHECK(m.accuracy == doctest::Approx(acc / n).epsilon(1e-12));
    CHECK(m.macro_f1 == doctest::Approx(brute_macro_f1(pred, y, c)).epsilon(1e-12));
    double ap = 0;
    int with_pos = 0;
    for (int k = 0; k < c; ++k) {
      if (std::find(y.begin(), y.end(), k) == y.end()) continue;
      std::vector<double> col(n);
      for (std::size_t i = 0; i < n; ++i) col[i] = scores(i, static_cast<std::size_t>(k));
      ap += brute_ap(col, y, k);
      ++with_pos;
    }
    CHECK(m.mean_ap == doctest::Approx(ap / with_pos).epsilon(1e-12));
  }
}

TEST_CASE("equal strategy on 64 samples runs a single 64/64 iteration") {
  const auto d = small_data(64, 3, 1);
  TrainConfig c = quick_config(StrategyKind::kEqual, 1);
  CHECK(batches_per_epoch(64, 128, 2) == 1);
  const auto r = train(d.train, d.test, c);
  REQUIRE(r.records.size() == 1);
  CHECK(r.iteration_scores.size() == 1);
  CHECK(r.epoch_actions.front() == ActionVector{64, 64});
  CHECK(r.records[0].modalities[0].batch_size == 64);
  CHECK(r.records[0].modalities[1].proportion == 0.5);
}

TEST_CASE("epoch length") {
  CHECK(batches_per_epoch(1000, 128, 2) == 16);
  CHECK(batches_per_epoch(1024, 128, 2) == 16);
  CHECK(batches_per_epoch(1025, 128, 2) == 17);
  CHECK(batches_per_epoch(100, 30, 3) == 10);
}

TEST_CASE("recorded batch sizes are the ones actually used") {
  const auto d = small_data(300, 4, 1);
  for (auto kind : {StrategyKind::kEqual, StrategyKind::kHeuristic, StrategyKind::kDiscProp,
                    StrategyKind::kReinforce}) {
    TrainConfig c = quick_config(kind, 5);
    c.policy_learning_rate = 0.1;
    const auto r = train(d.train, d.test, c);
    REQUIRE(r.records.size() == 5);
    REQUIRE(r.epoch_actions.size() == 5);
    CHECK(r.iteration_scores.size() == 5 * batches_per_epoch(300, 128, 2));
    for (std::size_t e = 0; e < 5; ++e) {
      const double total = static_cast<double>(r.epoch_actions[e][0] + r.epoch_actions[e][1]);
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(r.records[e].modalities[j].batch_size == static_cast<double>(r.epoch_actions[e][j]));
        CHECK(r.records[e].modalities[j].proportion == r.epoch_actions[e][j] / total);
      }
    }
    if (kind == StrategyKind::kEqual)
      for (const auto& a : r.epoch_actions) CHECK(a == ActionVector{64, 64});
    CHECK(r.epoch_actions.front() == ActionVector{64, 64});
  }
}

TEST_CASE("equal sampling consumes exactly N_B / m samples per modality per iteration") {
  const auto d = small_data(200, 3, 1);
  ModelBundle model;
  Rng rng(1);
  const std::vector<std::size_t> dims{8, 6};
  model = ModelBundle::make(dims, 4, 32, OptimizerConfig{}, rng);
  BatchSampler sampler(200, 2, 3);
  for (int it = 0; it < 7; ++it) {
    std::vector<ModalityBatch> batches;
    for (std::size_t j = 0; j < 2; ++j) batches.push_back(sampler.sample_batch(d.train, j, 64));
    const PairedBatch paired = sampler.paired_subbatch(d.train, batches);
    joint_step(model, batches, &paired);
    CHECK(sampler.consumed(0) == 64u * (it + 1));
    CHECK(sampler.consumed(1) == 64u * (it + 1));
    CHECK(sampler.paired_consumed() == 64u * (it + 1));
  }
}

TEST_CASE("logged cumulative scores equal the brute-force mean of iteration scores") {
  const auto d = small_data(400, 4, 1);
  for (auto mode : {MmlMode::kJoint, MmlMode::kAlternating}) {
    TrainConfig c = quick_config(StrategyKind::kDiscProp, 6);
    c.mml_mode = mode;
    const auto r = train(d.train, d.test, c);
    const std::size_t per = batches_per_epoch(400, 128, 2);
    for (std::size_t e = 0; e < r.records.size(); ++e)
      for (std::size_t j = 0; j < 2; ++j) {
        long double all = 0, epoch = 0;
        for (std::size_t t = 0; t < (e + 1) * per; ++t) {
          all += r.iteration_scores[t][j];
          if (t >= e * per) epoch += r.iteration_scores[t][j];
        }
        CHECK(std::abs(r.records[e].modalities[j].score_cumulative -
                       static_cast<double>(all / ((e + 1) * per))) < 1e-9);
        CHECK(std::abs(r.records[e].modalities[j].score_epoch - static_cast<double>(epoch / per)) <
              1e-9);
        const auto& m = r.records[e].modalities;
        CHECK(r.records[e].gap == doctest::Approx(std::abs(m[0].score_cumulative - m[1].score_cumulative)));
      }
  }
}

TEST_CASE("alternating step follows a scripted two-phase oracle") {
  const auto d = small_data(200, 4, 1);
  Rng rng(9);
  const std::vector<std::size_t> dims{8, 6};
  ModelBundle model = ModelBundle::make(dims, 4, 16, OptimizerConfig{}, rng);
  ModelBundle oracle = model;
  BatchSampler sampler(200, 2, 4);
  std::vector<ModalityBatch> batches{sampler.sample_batch(d.train, 0, 40),
                                     sampler.sample_batch(d.train, 1, 70)};

  DiscrepancyTracker tracker(2);
  tracker.update(std::vector<double>{0.5, 0.5});
  DiscrepancyTracker oracle_tracker = tracker;
  const AlternatingTrace trace = alternating_step(model, batches, tracker);

  std::vector<std::vector<double>> phases;
  for (std::size_t j = 0; j < 2; ++j) {
    const Matrix probs = softmax_rows(predict_logits(oracle.networks[j], batches[j].features));
    oracle_tracker.update_modality(j, batch_score(probs, batches[j].labels));
    phases.push_back(oracle_tracker.cumulative());
    backward_and_step(oracle.networks[j], batches[j].features, batches[j].labels, oracle.optimizers[j]);
  }
  REQUIRE(trace.tracker_after_phase.size() == 2);
  CHECK(trace.tracker_after_phase == phases);
  // Phase two already sees modality one's new score, modality two still old.
  CHECK(trace.tracker_after_phase[1][0] == trace.tracker_after_phase[0][0]);
  CHECK(trace.tracker_after_phase[0][1] == 0.5);
  CHECK(tracker.cumulative() == phases.back());
  CHECK(model.networks == oracle.networks);
  CHECK(trace.step.fused_loss == 0.0);
}

TEST_CASE("with one modality alternating and joint steps coincide") {
  SyntheticSpec s;
  s.n_train = 100;
  s.classes = 3;
  s.modalities = {{5, 2, 1}, {5, 2, 1}};
  MultimodalDataset data = generate_synthetic(s).train;
  data.modalities.pop_back();
  Rng rng(4);
  const std::vector<std::size_t> dims{5};
  ModelBundle a = ModelBundle::make(dims, 3, 8, OptimizerConfig{}, rng);
  ModelBundle b = a;
  BatchSampler sampler(100, 1, 2);
  for (int it = 0; it < 5; ++it) {
    std::vector<ModalityBatch> batches{sampler.sample_batch(data, 0, 30)};
    DiscrepancyTracker tracker(1);
    const auto alt = alternating_step(a, batches, tracker);
    const auto joint = joint_step(b, batches, nullptr);
    CHECK(alt.step.losses == joint.losses);
    CHECK(alt.step.scores == joint.scores);
    CHECK(a.networks == b.networks);
  }
}

TEST_CASE("zero learning rate leaves every network unchanged") {
  const auto d = small_data(120, 3, 1);
  Rng rng(3);
  const std::vector<std::size_t> dims{8, 6};
  OptimizerConfig opt;
  opt.learning_rate = 0.0;
  ModelBundle model = ModelBundle::make(dims, 4, 16, opt, rng);
  const auto start = model.networks;
  BatchSampler sampler(120, 2, 8);
  std::vector<ModalityBatch> batches{sampler.sample_batch(d.train, 0, 20),
                                     sampler.sample_batch(d.train, 1, 50)};
  const PairedBatch paired = sampler.paired_subbatch(d.train, batches);
  const auto step = joint_step(model, batches, &paired);
  CHECK(model.networks == start);
  CHECK(step.fused_loss > 0.0);
  DiscrepancyTracker tracker(2);
  alternating_step(model, batches, tracker);
  CHECK(model.networks == start);
}

TEST_CASE("joint step gradient includes the fused term") {
  // Compare one joint step with hand-assembled gradients, momentum free.
  const auto d = small_data(120, 3, 1);
  Rng rng(12);
  const std::vector<std::size_t> dims{8, 6};
  OptimizerConfig opt{0.05, 0.0, 0.0};
  ModelBundle model = ModelBundle::make(dims, 4, 16, opt, rng);
  ModelBundle expect = model;
  BatchSampler sampler(120, 2, 8);
  std::vector<ModalityBatch> batches{sampler.sample_batch(d.train, 0, 24),
                                     sampler.sample_batch(d.train, 1, 40)};
  const PairedBatch paired = sampler.paired_subbatch(d.train, batches);
  joint_step(model, batches, &paired);

  std::vector<ForwardCache> fused_caches;
  std::vector<Matrix> fused_logits;
  for (std::size_t j = 0; j < 2; ++j) {
    fused_caches.push_back(forward(expect.networks[j], paired.features[j]));
    fused_logits.push_back(fused_caches.back().logits());
  }
  Matrix dfused;
  softmax_cross_entropy(fuse_logits(fused_logits), paired.labels, dfused, 0.5);
  for (std::size_t j = 0; j < 2; ++j) {
    Gradients g = zero_gradients(expect.networks[j]);
    const ForwardCache uni = forward(expect.networks[j], batches[j].features);
    Matrix duni;
    softmax_cross_entropy(uni.logits(), batches[j].labels, duni);
    backward(expect.networks[j], uni, duni, g);
    backward(expect.networks[j], fused_caches[j], dfused, g);
    expect.optimizers[j].step(expect.networks[j], g);
  }
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t l = 0; l < 2; ++l)
      for (std::size_t i = 0; i < model.networks[j].layers[l].weight.size(); ++i)
        CHECK(model.networks[j].layers[l].weight.values()[i] ==
              doctest::Approx(expect.networks[j].layers[l].weight.values()[i]).epsilon(1e-12));
}

TEST_CASE("a frozen near-deterministic policy reproduces equal sampling") {
  const auto d = small_data(300, 4, 1);
  TrainConfig eq = quick_config(StrategyKind::kEqual, 6);
  TrainConfig rl = quick_config(StrategyKind::kReinforce, 6);
  rl.policy_learning_rate = 0.0;
  rl.policy_sigma = 1e-12;
  const auto a = train(d.train, d.test, eq);
  const auto b = train(d.train, d.test, rl);
  CHECK(a.epoch_actions == b.epoch_actions);
  for (std::size_t e = 0; e < a.records.size(); ++e) {
    MetricsRecord x = a.records[e], y = b.records[e];
    x.reward = y.reward = 0;
    x.wall_clock_seconds = y.wall_clock_seconds = 0;
    CHECK(x == y);
  }
}

TEST_CASE("training is deterministic per seed") {
  const auto d = small_data(300, 4, 1);
  for (auto kind : {StrategyKind::kHeuristic, StrategyKind::kReinforce}) {
    TrainConfig c = quick_config(kind, 4);
    c.policy_learning_rate = 0.1;
    const auto a = train(d.train, d.test, c);
    const auto b = train(d.train, d.test, c);
    CHECK(to_csv(a.records) == to_csv(b.records));
    c.seed = 6;
    const auto other = train(d.train, d.test, c);
    CHECK(to_csv(a.records) != to_csv(other.records));
  }
}

TEST_CASE("separable modalities reach high train accuracy under equal sampling") {
  SyntheticSpec s;
  s.n_train = 1000;
  s.n_test = 500;
  s.classes = 10;
  s.seed = 3;
  s.modalities = {{16, 5, 1}, {16, 6, 1}};
  const auto d = generate_synthetic(s);
  TrainConfig c = quick_config(StrategyKind::kEqual, 30);
  const auto r = train(d.train, d.test, c);
  const auto rep = evaluate(r.model, d.train);
  CHECK(rep.unimodal[0].accuracy >= 0.9);
  CHECK(rep.unimodal[1].accuracy >= 0.9);
  CHECK(rep.fused.accuracy >= 0.9);
}

TEST_CASE("non-finite losses abort the run with a diagnostic") {
  const auto d = small_data(300, 4, 1);
  TrainConfig c = quick_config(StrategyKind::kEqual, 10);
  c.optimizer.learning_rate = 1e6;
  c.optimizer.momentum = 0.0;
  const auto r = train(d.train, d.test, c);
  CHECK(r.diverged);
  CHECK_FALSE(r.diagnostic.empty());
  CHECK(r.records.size() < 10);
}

TEST_CASE("config validation names the field") {
  TrainConfig c;
  c.epochs = 0;
  try {
    c.validate(2);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("epochs") != std::string::npos);
  }
  c = TrainConfig{};
  c.batch_budget = 2;
  CHECK_THROWS_AS(c.validate(3), ValidationError);
  c = TrainConfig{};
  c.policy_sigma = 0.0;
  CHECK_THROWS_AS(c.validate(2), ValidationError);
}

TEST_CASE("metrics records survive CSV and JSON round trips") {
  const auto d = small_data(200, 4, 1);
  TrainConfig c = quick_config(StrategyKind::kReinforce, 3);
  c.policy_learning_rate = 0.1;
  const auto r = train(d.train, d.test, c);
  for (const auto& rec : r.records) {
    MetricsRecord no_clock = rec;
    no_clock.wall_clock_seconds = 0;
    CHECK(from_csv_row(to_csv_row(rec), 2) == no_clock);
    CHECK(record_from_json(to_json(rec)) == rec);
  }
  CHECK(csv_columns(2).size() == 1 + 2 * 8 + 7);
  CHECK(csv_header(2).rfind("epoch,batch_1,", 0) == 0);
  CHECK(format_double(0.1) == "0.1");
}
