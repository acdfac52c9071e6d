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

#include "dus/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace dus::kernels {
namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = std::size_t{1} << 15;

inline void affine_row(Shape s, std::size_t r, const double* x,
                       const double* w, const double* bias, double* y) {
  const double* xr = x + r * s.in;
  double* yr = y + r * s.out;
  for (std::size_t o = 0; o < s.out; ++o) {
    const double* wo = w + o * s.in;
    double acc = bias[o];
    for (std::size_t i = 0; i < s.in; ++i) acc += xr[i] * wo[i];
    yr[o] = acc;
  }
}

inline void input_grad_row(Shape s, std::size_t r, const double* dy,
                           const double* w, double* dx) {
  const double* dyr = dy + r * s.out;
  double* dxr = dx + r * s.in;
  for (std::size_t i = 0; i < s.in; ++i) dxr[i] = 0.0;
  for (std::size_t o = 0; o < s.out; ++o) {
    const double g = dyr[o];
    const double* wo = w + o * s.in;
    for (std::size_t i = 0; i < s.in; ++i) dxr[i] += g * wo[i];
  }
}

inline void param_grad_row(Shape s, std::size_t o, const double* dy,
                           const double* x, double* dw, double* dbias) {
  double* dwo = dw + o * s.in;
  double db = 0.0;
  for (std::size_t r = 0; r < s.rows; ++r) {
    const double g = dy[r * s.out + o];
    db += g;
    const double* xr = x + r * s.in;
    for (std::size_t i = 0; i < s.in; ++i) dwo[i] += g * xr[i];
  }
  dbias[o] += db;
}

inline void softmax_row(std::size_t cols, double* z) {
  double hi = z[0];
  for (std::size_t c = 1; c < cols; ++c) hi = std::max(hi, z[c]);
  double sum = 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    z[c] = std::exp(z[c] - hi);
    sum += z[c];
  }
  for (std::size_t c = 0; c < cols; ++c) z[c] /= sum;
}

inline std::size_t work(Shape s) { return s.rows * s.in * s.out; }

}  // namespace

namespace serial {

void affine(Shape s, std::span<const double> x, std::span<const double> w,
            std::span<const double> bias, std::span<double> y) {
  for (std::size_t r = 0; r < s.rows; ++r)
    affine_row(s, r, x.data(), w.data(), bias.data(), y.data());
}

void input_grad(Shape s, std::span<const double> dy,
                std::span<const double> w, std::span<double> dx) {
  for (std::size_t r = 0; r < s.rows; ++r)
    input_grad_row(s, r, dy.data(), w.data(), dx.data());
}

void accumulate_param_grad(Shape s, std::span<const double> dy,
                           std::span<const double> x, std::span<double> dw,
                           std::span<double> dbias) {
  for (std::size_t o = 0; o < s.out; ++o)
    param_grad_row(s, o, dy.data(), x.data(), dw.data(), dbias.data());
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<double> z) {
  if (cols == 0) return;
  for (std::size_t r = 0; r < rows; ++r) softmax_row(cols, z.data() + r * cols);
}

}  // namespace serial

namespace parallel {

void affine(Shape s, std::span<const double> x, std::span<const double> w,
            std::span<const double> bias, std::span<double> y) {
  const auto rows = static_cast<long long>(s.rows);
#pragma omp parallel for schedule(static) if (work(s) >= kParallelWork)
  for (long long r = 0; r < rows; ++r)
    affine_row(s, static_cast<std::size_t>(r), x.data(), w.data(), bias.data(),
               y.data());
}

void input_grad(Shape s, std::span<const double> dy,
                std::span<const double> w, std::span<double> dx) {
  const auto rows = static_cast<long long>(s.rows);
#pragma omp parallel for schedule(static) if (work(s) >= kParallelWork)
  for (long long r = 0; r < rows; ++r)
    input_grad_row(s, static_cast<std::size_t>(r), dy.data(), w.data(),
                   dx.data());
}

void accumulate_param_grad(Shape s, std::span<const double> dy,
                           std::span<const double> x, std::span<double> dw,
                           std::span<double> dbias) {
  // Split over output units: each dw row and bias entry has a single owner.
  const auto outs = static_cast<long long>(s.out);
#pragma omp parallel for schedule(static) if (work(s) >= kParallelWork)
  for (long long o = 0; o < outs; ++o)
    param_grad_row(s, static_cast<std::size_t>(o), dy.data(), x.data(),
                   dw.data(), dbias.data());
}

void softmax_rows(std::size_t rows, std::size_t cols, std::span<double> z) {
  if (cols == 0) return;
  const auto n = static_cast<long long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (long long r = 0; r < n; ++r)
    softmax_row(cols, z.data() + static_cast<std::size_t>(r) * cols);
}

}  // namespace parallel

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace dus::kernels
