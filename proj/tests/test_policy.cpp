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
#include "dus/policy.hpp"

using namespace dus;

namespace {

// Random point strictly inside the simplex.
std::vector<double> random_simplex(std::size_t m, std::mt19937_64& gen) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(m);
  double s = 0.0;
  for (double& v : p) s += (v = e(gen) + 1e-3);
  for (double& v : p) v /= s;
  return p;
}

double hand_reward(const std::vector<double>& s, const std::vector<double>& p) {
  const double top = *std::max_element(s.begin(), s.end());
  double r = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j)
    if (s[j] != top) r -= std::log(p[j]);
  return r / static_cast<double>(s.size());
}

PolicyNet random_policy(std::size_t m, std::mt19937_64& gen, double sigma = 0.5) {
  Rng rng(gen());
  PolicyNet p = PolicyNet::make(m, 16, sigma, 1e-2, rng);
  // Give the zero-initialised output layer some weight so every parameter
  // carries gradient.
  std::normal_distribution<double> n(0.0, 0.5);
  for (double& w : p.net.layers.back().weight.values()) w = n(gen);
  for (double& b : p.net.layers.back().bias) b = n(gen);
  for (double& b : p.net.layers.front().bias) b = 0.1 + std::abs(n(gen));
  return p;
}

}  // namespace

TEST_CASE("heuristic schedule examples") {
  HeuristicParams p{0.0, 0.5, 10, 64};
  CHECK(heuristic_batch(0, p) == 32);
  const auto autop = HeuristicParams::with_auto_alpha(0.5, 10, 64);
  CHECK(autop.alpha == doctest::Approx(std::log(2.0) / 10));
  CHECK(heuristic_batch(10, autop) == 64);
  CHECK(heuristic_batch(5, autop) == 45);
  CHECK(0.5 * std::pow(2.0, 0.5) * 64 == doctest::Approx(45.25).epsilon(1e-3));
  CHECK_THROWS_AS(heuristic_batch(-1, autop), ValidationError);
  CHECK_THROWS_AS(heuristic_batch(11, autop), ValidationError);
  HeuristicParams bad{0.1, 1.5, 10, 64};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("heuristic schedule matches the closed form and never decreases") {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> beta(0.05, 1.0), alpha(0.001, 0.3);
  for (int trial = 0; trial < 300; ++trial) {
    HeuristicParams p{alpha(gen), beta(gen), 1 + static_cast<int>(gen() % 40),
                      static_cast<std::size_t>(2 + gen() % 256)};
    std::size_t prev = 0;
    for (int t = 0; t <= p.max_epoch; ++t) {
      const double raw = std::round(p.beta * std::exp(p.alpha * t) * static_cast<double>(p.base_batch));
      const double clamped = std::clamp(raw, 1.0, static_cast<double>(p.base_batch));
      const std::size_t f = heuristic_batch(t, p);
      CHECK(static_cast<double>(f) == clamped);
      CHECK(f >= prev);
      prev = f;
    }
  }
}

TEST_CASE("proportions_to_action examples") {
  CHECK(proportions_to_action(std::vector<double>{0.5, 0.5}, 64) == ActionVector{32, 32});
  CHECK(proportions_to_action(std::vector<double>{0.3, 0.7}, 64) == ActionVector{19, 45});
  CHECK(proportions_to_action(std::vector<double>{0.01, 0.99}, 64) == ActionVector{1, 63});
  CHECK(proportions_to_action(std::vector<double>{0.3, 0.7}, 64, Rounding::kIndependent, 40) ==
        ActionVector{19, 40});
}

TEST_CASE("rounding modes on random proportions") {
  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 2 + gen() % 5;
    const std::size_t budget = m + gen() % 300;
    const auto p = random_simplex(m, gen);
    const auto a = proportions_to_action(p, budget);
    long long sum = 0;
    bool any_clamped = false;
    for (std::size_t j = 0; j < m; ++j) {
      const double raw = std::round(static_cast<double>(budget) * p[j]);
      CHECK(a[j] == static_cast<std::size_t>(std::max(raw, 1.0)));
      any_clamped = any_clamped || raw < 1.0;
      sum += static_cast<long long>(a[j]);
    }
    const double drift = std::abs(static_cast<double>(sum) - static_cast<double>(budget));
    if (!any_clamped) CHECK(drift <= m / 2.0);

    const auto lr = proportions_to_action(p, budget, Rounding::kLargestRemainder);
    CHECK(std::accumulate(lr.begin(), lr.end(), std::size_t{0}) == budget);
    for (std::size_t j = 0; j < m; ++j) {
      CHECK(lr[j] >= 1);
      if (!any_clamped) CHECK(std::abs(static_cast<double>(lr[j]) - budget * p[j]) < 1.0);
    }
  }
}

TEST_CASE("reward examples") {
  CHECK(reward(std::vector<double>{0.8, 0.3}, std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(-0.5 * std::log(0.5)).epsilon(1e-12));
  CHECK(std::abs(reward(std::vector<double>{0.8, 0.3}, std::vector<double>{0.5, 0.5}) - 0.3466) < 1e-4);
  CHECK(reward(std::vector<double>{0.5, 0.5}, std::vector<double>{0.3, 0.7}) == 0.0);
  CHECK(std::abs(reward(std::vector<double>{0.8, 0.3}, std::vector<double>{0.2, 0.8}) - 0.1116) < 1e-4);
  CHECK_THROWS_AS(reward(std::vector<double>{0.8, 0.3}, std::vector<double>{1.0, 0.0}), ValidationError);
}

TEST_CASE("reward agrees with a hand evaluation on random cases") {
  std::mt19937_64 gen(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 2 + gen() % 5;
    std::vector<double> s(m);
    for (double& v : s) v = u(gen);
    if (trial % 5 == 0) s[gen() % m] = *std::max_element(s.begin(), s.end());
    const auto p = random_simplex(m, gen);
    const double r = reward(s, p);
    CHECK(std::abs(r - hand_reward(s, p)) < 1e-12);
    CHECK(r >= 0.0);

    // Positive rescaling keeps the indicator pattern.
    const double c = 0.1 + 10 * u(gen);
    std::vector<double> scaled = s;
    for (double& v : scaled) v *= c;
    CHECK(reward(scaled, p) == doctest::Approx(r).epsilon(1e-12));
  }
}

TEST_CASE("reward is zero exactly on ties") {
  std::mt19937_64 gen(30);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = 2 + gen() % 4;
    const std::vector<double> s(m, 0.25 + 0.5 * static_cast<double>(gen() % 100) / 100.0);
    CHECK(reward(s, random_simplex(m, gen)) == 0.0);
  }
}

TEST_CASE("with modality 1 dominant the reward grows with modality 1's share") {
  // r(p1) = -log(1 - p1) / 2 on a fine grid of (0, 1).
  const std::vector<double> state{0.9, 0.2};
  double prev = -1.0;
  for (int k = 1; k < 1000; ++k) {
    const double p1 = k / 1000.0;
    const double r = reward(state, std::vector<double>{p1, 1 - p1});
    CHECK(r > prev);
    prev = r;
  }
}

TEST_CASE("discrepancy-proportional examples") {
  auto a = discrepancy_proportional(std::vector<double>{0.5, 0.5});
  CHECK(a[0] == doctest::Approx(0.5));
  auto b = discrepancy_proportional(std::vector<double>{0.8, 0.2});
  CHECK(b[0] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(b[1] == doctest::Approx(0.8).epsilon(1e-12));
  auto c = discrepancy_proportional(std::vector<double>{0.6, 0.3, 0.1});
  CHECK(std::abs(c[0] - 0.1111) < 1e-4);
  CHECK(std::abs(c[1] - 0.2222) < 1e-4);
  CHECK(std::abs(c[2] - 0.6667) < 1e-4);
  auto z = discrepancy_proportional(std::vector<double>{0.0, 0.5});
  CHECK(z[0] == doctest::Approx((1 / 1e-6) / (1 / 1e-6 + 2)).epsilon(1e-12));
  CHECK_NOTHROW(validate_proportions(z));
}

TEST_CASE("policy_act always yields a valid proportion vector") {
  std::mt19937_64 gen(37);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t m = 2 + gen() % 4;
    PolicyNet p = random_policy(m, gen, 0.05 + 2 * u(gen));
    std::vector<double> s(m);
    for (double& v : s) v = u(gen);
    Rng rng(gen());
    const PolicyAction a = policy_act(p, s, rng);
    double sum = 0.0;
    for (double v : a.proportions) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);
    CHECK(a.state == s);
    CHECK(a.logprob == doctest::Approx(gaussian_logprob(a.sample, a.mean, p.sigma)).epsilon(1e-12));
  }
}

TEST_CASE("fresh policy with vanishing noise proposes a uniform split") {
  Rng rng(1);
  const PolicyNet p = PolicyNet::make(3, 16, 1e-12, 1e-4, rng);
  const PolicyAction a = policy_act(p, std::vector<double>{0.9, 0.1, 0.5}, rng);
  for (double v : a.proportions) CHECK(v == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("policy_act is deterministic for a fixed seed") {
  Rng init(5);
  const PolicyNet p = PolicyNet::make(2, 16, 0.5, 1e-4, init);
  Rng a(99), b(99);
  const auto x = policy_act(p, std::vector<double>{0.7, 0.2}, a);
  const auto y = policy_act(p, std::vector<double>{0.7, 0.2}, b);
  CHECK(x.proportions == y.proportions);
  CHECK(x.logprob == y.logprob);
}

TEST_CASE("log-density gradient matches central differences") {
  std::mt19937_64 gen(41);
  for (int trial = 0; trial < 5; ++trial) {
    PolicyNet p = random_policy(2, gen);
    REQUIRE(p.net.parameter_count() <= 200);
    const std::vector<double> s{0.3 + 0.1 * trial, 0.8 - 0.1 * trial};
    Rng rng(gen());
    const PolicyAction a = policy_act(p, s, rng);
    const Gradients g = logprob_gradient(p, a);
    const double h = 1e-5;
    auto logprob_at = [&]() {
      const Matrix mu = predict_logits(p.net, Matrix(1, 2, std::vector<double>(s)));
      return gaussian_logprob(a.sample, mu.values(), p.sigma);
    };
    for (std::size_t l = 0; l < p.net.layers.size(); ++l) {
      auto probe = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + h;
        const double up = logprob_at();
        param = saved - h;
        const double down = logprob_at();
        param = saved;
        const double fd = (up - down) / (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic), 1e-8});
        CHECK(std::abs(fd - analytic) / denom < 1e-4);
      };
      for (std::size_t i = 0; i < p.net.layers[l].weight.size(); ++i)
        probe(p.net.layers[l].weight.values()[i], g[l].weight.values()[i]);
      for (std::size_t i = 0; i < p.net.layers[l].bias.size(); ++i)
        probe(p.net.layers[l].bias[i], g[l].bias[i]);
    }
  }
}

TEST_CASE("reinforce_update leaves the net alone for a zero reward and rejects stale draws") {
  std::mt19937_64 gen(43);
  PolicyNet p = random_policy(2, gen);
  const PolicyNet before = p;
  Rng rng(3);
  const std::vector<double> s{0.9, 0.2};
  const PolicyAction a = policy_act(p, s, rng);
  reinforce_update(p, 0.0, a, s);
  CHECK(p.net == before.net);
  CHECK_THROWS_AS(reinforce_update(p, 1.0, a, std::vector<double>{0.9, 0.3}), ValidationError);
  reinforce_update(p, 0.5, a, s);
  CHECK_FALSE(p.net == before.net);
}

TEST_CASE("reinforce step is -lr * r * grad log-density") {
  std::mt19937_64 gen(44);
  PolicyNet p = random_policy(2, gen);
  const PolicyNet before = p;
  Rng rng(8);
  const std::vector<double> s{0.9, 0.2};
  const PolicyAction a = policy_act(p, s, rng);
  const Gradients g = logprob_gradient(p, a);
  const double r = 0.37;
  reinforce_update(p, r, a, s);
  for (std::size_t l = 0; l < p.net.layers.size(); ++l)
    for (std::size_t i = 0; i < g[l].weight.size(); ++i)
      CHECK(p.net.layers[l].weight.values()[i] ==
            doctest::Approx(before.net.layers[l].weight.values()[i] -
                            p.learning_rate * r * g[l].weight.values()[i]).epsilon(1e-14));
}

TEST_CASE("repeated reinforce updates shift mass to the weaker modality") {
  Rng init(2024);
  PolicyNet p = PolicyNet::make(2, 16, 0.5, 1e-2, init);
  Rng rng(7);
  const std::vector<double> s{0.9, 0.2};
  std::vector<double> share;
  for (int step = 0; step < 500; ++step) {
    const PolicyAction a = policy_act(p, s, rng);
    share.push_back(a.proportions[1]);
    reinforce_update(p, reward(s, a.proportions), a, s);
  }
  const double first = std::accumulate(share.begin(), share.begin() + 50, 0.0) / 50;
  const double last = std::accumulate(share.end() - 50, share.end(), 0.0) / 50;
  CHECK(last > first);
}

TEST_CASE("strategy parsing round trips") {
  for (auto k : {StrategyKind::kEqual, StrategyKind::kHeuristic, StrategyKind::kDiscProp,
                 StrategyKind::kReinforce})
    CHECK(parse_strategy(to_string(k)) == k);
  CHECK_FALSE(parse_strategy("adaptive").has_value());
}

TEST_CASE("equal and discprop strategies") {
  StrategyConfig c;
  c.kind = StrategyKind::kEqual;
  auto eq = make_strategy(c, 2, 1000);
  CHECK(eq->initial_action() == ActionVector{64, 64});
  CHECK(eq->next_action(1, std::vector<double>{0.9, 0.1}).action == ActionVector{64, 64});

  c.kind = StrategyKind::kDiscProp;
  auto dp = make_strategy(c, 2, 1000);
  const auto d = dp->next_action(1, std::vector<double>{0.8, 0.2});
  CHECK(d.action == ActionVector{26, 102});
  CHECK(d.proportions[1] == doctest::Approx(0.8));
  CHECK(d.reward == doctest::Approx(-0.5 * std::log(0.8)));

  // Allocations never exceed the dataset.
  auto small = make_strategy(c, 2, 50);
  const auto s = small->next_action(1, std::vector<double>{0.8, 0.2});
  CHECK(s.action[1] == 50);
}

TEST_CASE("heuristic strategy shrinks the dominant modality after the warm-up") {
  StrategyConfig c;
  c.kind = StrategyKind::kHeuristic;
  c.epochs = 30;
  auto h = make_strategy(c, 2, 1000);
  auto* hs = dynamic_cast<HeuristicStrategy*>(h.get());
  REQUIRE(hs != nullptr);
  CHECK(hs->params().max_epoch == 28);
  CHECK(hs->params().base_batch == 64);
  CHECK(h->initial_action() == ActionVector{64, 64});
  CHECK(h->next_action(1, std::vector<double>{0.7, 0.3}).action == ActionVector{32, 64});
  CHECK(h->next_action(1, std::vector<double>{0.3, 0.7}).action == ActionVector{64, 32});
  const std::size_t mid = heuristic_batch(14, hs->params());
  CHECK(h->next_action(15, std::vector<double>{0.7, 0.3}).action == ActionVector{mid, 64});
  CHECK(h->next_action(29, std::vector<double>{0.7, 0.3}).action == ActionVector{64, 64});
}

TEST_CASE("reinforce strategy with a frozen policy keeps uniform mean proportions") {
  StrategyConfig c;
  c.kind = StrategyKind::kReinforce;
  c.policy_learning_rate = 0.0;
  c.policy_sigma = 1e-12;
  auto r = make_strategy(c, 2, 1000);
  auto* rs = dynamic_cast<ReinforceStrategy*>(r.get());
  const Network start = rs->policy().net;
  for (int e = 1; e < 30; ++e) {
    const auto d = r->next_action(e, std::vector<double>{0.9 - 0.01 * e, 0.2});
    CHECK(d.action == ActionVector{64, 64});
    CHECK(d.reward > 0.0);
  }
  CHECK(rs->policy().net == start);
}
