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

// Small dense network toolkit: row-major matrices, linear layers with ReLU
// between them, softmax/cross-entropy, momentum SGD and a diagonal Gaussian
// used for policy exploration. Gradients are written out by hand.

#ifndef DUS_NUMERICS_HPP_
#define DUS_NUMERICS_HPP_

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace dus {

using Rng = std::mt19937_64;

// Lower clamp applied to probabilities before taking log in cross-entropy.
inline constexpr double kLogEpsilon = 1e-12;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  // Throws DimensionError unless data.size() == rows * cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

bool all_finite(const Matrix& m);

// Gather the listed rows of `m` into a new matrix, in the given order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);

struct LayerParams {
  Matrix weight;  // out x in
  std::vector<double> bias;  // out

  std::size_t in() const { return weight.cols(); }
  std::size_t out() const { return weight.rows(); }

  bool operator==(const LayerParams&) const = default;
};

// Weights ~ U(-sqrt(1/in), sqrt(1/in)), zero bias.
LayerParams make_layer(std::size_t in, std::size_t out, Rng& rng);
LayerParams zero_layer(std::size_t in, std::size_t out);

// y = x W^T + b. Throws DimensionError on shape mismatch.
Matrix linear_forward(const Matrix& x, const LayerParams& p);

// Max-subtracted softmax; safe for arbitrarily large finite inputs.
std::vector<double> softmax(std::span<const double> z);
Matrix softmax_rows(Matrix logits);

// -y^T log(max(p, eps)). Throws ValidationError if y is not one-hot or the
// lengths differ.
double cross_entropy(std::span<const double> p, std::span<const double> y);

// A stack of linear layers with ReLU after every layer but the last. An
// encoder followed by a one-layer head is a Network of depth two.
struct Network {
  std::vector<LayerParams> layers;

  std::size_t input_dim() const { return layers.front().in(); }
  std::size_t output_dim() const { return layers.back().out(); }
  std::size_t parameter_count() const;

  bool operator==(const Network&) const = default;
};

// widths = {in, hidden..., out}.
Network make_network(std::span<const std::size_t> widths, Rng& rng);

// activations[0] is the input, activations[k] the post-ReLU output of layer
// k for hidden layers, and activations.back() the raw logits.
struct ForwardCache {
  std::vector<Matrix> activations;

  const Matrix& logits() const { return activations.back(); }
};

ForwardCache forward(const Network& net, Matrix x);
Matrix predict_logits(const Network& net, const Matrix& x);

// Same shapes as Network::layers.
using Gradients = std::vector<LayerParams>;

Gradients zero_gradients(const Network& net);

// Backpropagate dL/dlogits through `net` and add the parameter gradients
// into `grads`.
void backward(const Network& net, const ForwardCache& cache,
              const Matrix& dlogits, Gradients& grads);

// Mean softmax cross-entropy of a batch of logits against class labels.
// Writes scale * dL/dlogits = scale * (p - y) / n into `dlogits` and
// returns the (unscaled) loss. Throws ValidationError on an empty batch.
double softmax_cross_entropy(const Matrix& logits, std::span<const int> labels,
                             Matrix& dlogits, double scale = 1.0);

struct SgdState {
  double learning_rate = 1e-2;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::vector<LayerParams> velocity;

  static SgdState for_network(const Network& net, double learning_rate,
                              double momentum, double weight_decay);

  // v <- momentum * v + (g + weight_decay * w); w <- w - lr * v
  void step(Network& net, const Gradients& grads);
};

// One momentum-SGD step on the mean cross-entropy of (x, labels). Returns
// the loss evaluated before the update.
double backward_and_step(Network& net, const Matrix& x,
                         std::span<const int> labels, SgdState& sgd);

struct GaussianDraw {
  std::vector<double> sample;
  double logprob = 0.0;
};

// sample ~ N(mean, sigma^2 I) with its exact log-density. Throws
// ValidationError if sigma <= 0.
GaussianDraw gaussian_sample_logprob(std::span<const double> mean, double sigma,
                                     Rng& rng);
double gaussian_logprob(std::span<const double> x, std::span<const double> mean,
                        double sigma);

}  // namespace dus

#endif  // DUS_NUMERICS_HPP_
