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

#include "dus/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dus/errors.hpp"
#include "dus/kernels.hpp"

namespace dus {
namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_)
    throw DimensionError("matrix data has " + std::to_string(data_.size()) +
                         " entries, expected " + shape_str(rows_, cols_));
}

Matrix Matrix::from_rows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

bool all_finite(const Matrix& m) {
  return std::ranges::all_of(m.values(),
                             [](double v) { return std::isfinite(v); });
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = m.row(rows[i]);
    std::ranges::copy(src, out.row(i).begin());
  }
  return out;
}

LayerParams make_layer(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  LayerParams p{Matrix(out, in), std::vector<double>(out, 0.0)};
  for (double& w : p.weight.values()) w = dist(rng);
  return p;
}

LayerParams zero_layer(std::size_t in, std::size_t out) {
  return {Matrix(out, in), std::vector<double>(out, 0.0)};
}

Matrix linear_forward(const Matrix& x, const LayerParams& p) {
  if (x.cols() != p.in() || p.bias.size() != p.out())
    throw DimensionError("linear_forward: input " +
                         shape_str(x.rows(), x.cols()) + " vs weight " +
                         shape_str(p.out(), p.in()));
  Matrix y(x.rows(), p.out());
  kernels::parallel::affine({x.rows(), p.in(), p.out()}, x.values(),
                            p.weight.values(), p.bias, y.values());
  return y;
}

std::vector<double> softmax(std::span<const double> z) {
  std::vector<double> p(z.begin(), z.end());
  kernels::serial::softmax_rows(1, p.size(), p);
  return p;
}

Matrix softmax_rows(Matrix logits) {
  kernels::parallel::softmax_rows(logits.rows(), logits.cols(),
                                  logits.values());
  return logits;
}

double cross_entropy(std::span<const double> p, std::span<const double> y) {
  if (p.size() != y.size())
    throw ValidationError("cross_entropy: length mismatch");
  std::size_t ones = 0;
  std::size_t hot = 0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    if (y[k] == 1.0) {
      ++ones;
      hot = k;
    } else if (y[k] != 0.0) {
      throw ValidationError("cross_entropy: label vector is not one-hot");
    }
  }
  if (ones != 1)
    throw ValidationError("cross_entropy: label vector is not one-hot");
  return -std::log(std::max(p[hot], kLogEpsilon));
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.size() + l.bias.size();
  return n;
}

Network make_network(std::span<const std::size_t> widths, Rng& rng) {
  if (widths.size() < 2)
    throw ValidationError("make_network: need at least input and output width");
  Network net;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k)
    net.layers.push_back(make_layer(widths[k], widths[k + 1], rng));
  return net;
}

ForwardCache forward(const Network& net, Matrix x) {
  ForwardCache cache;
  cache.activations.reserve(net.layers.size() + 1);
  cache.activations.push_back(std::move(x));
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    Matrix y = linear_forward(cache.activations.back(), net.layers[k]);
    if (k + 1 < net.layers.size())
      for (double& v : y.values()) v = std::max(v, 0.0);
    cache.activations.push_back(std::move(y));
  }
  return cache;
}

Matrix predict_logits(const Network& net, const Matrix& x) {
  return forward(net, x).logits();
}

Gradients zero_gradients(const Network& net) {
  Gradients g;
  g.reserve(net.layers.size());
  for (const auto& l : net.layers) g.push_back(zero_layer(l.in(), l.out()));
  return g;
}

void backward(const Network& net, const ForwardCache& cache,
              const Matrix& dlogits, Gradients& grads) {
  const Matrix& logits = cache.logits();
  if (dlogits.rows() != logits.rows() || dlogits.cols() != logits.cols())
    throw DimensionError("backward: dlogits shape does not match logits");
  Matrix delta = dlogits;
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const LayerParams& layer = net.layers[k];
    const Matrix& input = cache.activations[k];
    const kernels::Shape s{input.rows(), layer.in(), layer.out()};
    kernels::parallel::accumulate_param_grad(s, delta.values(), input.values(),
                                             grads[k].weight.values(),
                                             grads[k].bias);
    if (k == 0) break;
    Matrix dinput(input.rows(), layer.in());
    kernels::parallel::input_grad(s, delta.values(), layer.weight.values(),
                                  dinput.values());
    // ReLU mask: the stored activation is the post-ReLU value.
    auto a = input.values();
    auto d = dinput.values();
    for (std::size_t i = 0; i < d.size(); ++i)
      if (a[i] <= 0.0) d[i] = 0.0;
    delta = std::move(dinput);
  }
}

double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels,
                             Matrix& dlogits, double scale) {
  const std::size_t n = logits.rows();
  const std::size_t c = logits.cols();
  if (n == 0) throw ValidationError("softmax_cross_entropy: empty batch");
  if (labels.size() != n)
    throw DimensionError("softmax_cross_entropy: labels/logits row mismatch");
  dlogits = softmax_rows(logits);
  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c)
      throw ValidationError("softmax_cross_entropy: label out of range");
    loss -= std::log(std::max(dlogits(i, y), kLogEpsilon));
    dlogits(i, y) -= 1.0;
  }
  for (double& g : dlogits.values()) g *= scale * inv_n;
  return loss * inv_n;
}

SgdState SgdState::for_network(const Network& net, double learning_rate,
                               double momentum, double weight_decay) {
  if (!(learning_rate >= 0.0) || !(momentum >= 0.0 && momentum < 1.0) ||
      !(weight_decay >= 0.0))
    throw ValidationError("SgdState: invalid hyperparameters");
  return {learning_rate, momentum, weight_decay, zero_gradients(net)};
}

void SgdState::step(Network& net, const Gradients& grads) {
  if (velocity.size() != net.layers.size() || grads.size() != net.layers.size())
    throw DimensionError("SgdState::step: layer count mismatch");
  auto update = [this](std::span<double> w, std::span<const double> g,
                       std::span<double> v) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] + g[i] + weight_decay * w[i];
      w[i] -= learning_rate * v[i];
    }
  };
  for (std::size_t k = 0; k < net.layers.size(); ++k) {
    update(net.layers[k].weight.values(), grads[k].weight.values(),
           velocity[k].weight.values());
    update(net.layers[k].bias, grads[k].bias, velocity[k].bias);
  }
}

double backward_and_step(Network& net, const Matrix& x,
                         std::span<const int> labels, SgdState& sgd) {
  if (x.rows() == 0) throw ValidationError("backward_and_step: empty batch");
  ForwardCache cache = forward(net, x);
  Matrix dlogits;
  const double loss = softmax_cross_entropy(cache.logits(), labels, dlogits);
  Gradients grads = zero_gradients(net);
  backward(net, cache, dlogits, grads);
  sgd.step(net, grads);
  return loss;
}

double gaussian_logprob(std::span<const double> x, std::span<const double> mean,
                        double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("gaussian: sigma must be positive");
  if (x.size() != mean.size()) throw DimensionError("gaussian: length mismatch");
  const double log_norm =
      -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sigma);
  double lp = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = (x[i] - mean[i]) / sigma;
    lp += log_norm - 0.5 * d * d;
  }
  return lp;
}

GaussianDraw gaussian_sample_logprob(std::span<const double> mean, double sigma,
                                     Rng& rng) {
  if (!(sigma > 0.0)) throw ValidationError("gaussian: sigma must be positive");
  std::normal_distribution<double> unit(0.0, 1.0);
  GaussianDraw draw;
  draw.sample.resize(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i)
    draw.sample[i] = mean[i] + sigma * unit(rng);
  draw.logprob = gaussian_logprob(draw.sample, mean, sigma);
  return draw;
}

}  // namespace dus
