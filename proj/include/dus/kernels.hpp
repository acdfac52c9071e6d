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

// Dense kernels behind the linear layers. Every kernel exists twice: a
// plain serial loop nest kept as the reference, and an OpenMP version that
// splits the outer loop across threads. Each output element is produced by
// exactly one thread using the same inner summation order as the serial
// loop, so both versions return bit-identical results.

#ifndef DUS_KERNELS_HPP_
#define DUS_KERNELS_HPP_

#include <cstddef>
#include <span>

namespace dus::kernels {

// Problem shape shared by all kernels: a batch of `rows` samples pushed
// through a layer mapping `in` features to `out` features.
struct Shape {
  std::size_t rows;
  std::size_t in;
  std::size_t out;
};

namespace serial {

// y[rows x out] = x[rows x in] * w[out x in]^T + bias[out]
void affine(Shape s, std::span<const double> x, std::span<const double> w,
            std::span<const double> bias, std::span<double> y);

// dx[rows x in] = dy[rows x out] * w[out x in]
void input_grad(Shape s, std::span<const double> dy,
                std::span<const double> w, std::span<double> dx);

// dw[out x in] += dy^T * x, dbias[out] += column sums of dy
void accumulate_param_grad(Shape s, std::span<const double> dy,
                           std::span<const double> x, std::span<double> dw,
                           std::span<double> dbias);

// Row-wise numerically stable softmax of a [rows x cols] block, in place.
void softmax_rows(std::size_t rows, std::size_t cols, std::span<double> z);

}  // namespace serial

namespace parallel {

void affine(Shape s, std::span<const double> x, std::span<const double> w,
            std::span<const double> bias, std::span<double> y);

void input_grad(Shape s, std::span<const double> dy,
                std::span<const double> w, std::span<double> dx);

void accumulate_param_grad(Shape s, std::span<const double> dy,
                           std::span<const double> x, std::span<double> dw,
                           std::span<double> dbias);

void softmax_rows(std::size_t rows, std::size_t cols, std::span<double> z);

}  // namespace parallel

// Number of threads the parallel kernels may use (1 without OpenMP).
int max_threads();

}  // namespace dus::kernels

#endif  // DUS_KERNELS_HPP_
