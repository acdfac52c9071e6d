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

// Serial vs OpenMP timings for the dense kernels. Arguments are
// {rows, in, out}; the small shape sits below the parallel threshold.

#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "dus/kernels.hpp"

namespace {

using dus::kernels::Shape;

struct Buffers {
  Shape shape;
  std::vector<double> x, w, b, y, dx, dw, db;

  explicit Buffers(const benchmark::State& state)
      : shape{static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)),
              static_cast<std::size_t>(state.range(2))} {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> n(0.0, 1.0);
    auto fill = [&](std::vector<double>& v, std::size_t size) {
      v.resize(size);
      for (auto& e : v) e = n(rng);
    };
    fill(x, shape.rows * shape.in);
    fill(w, shape.out * shape.in);
    fill(b, shape.out);
    fill(y, shape.rows * shape.out);
    dx.assign(shape.rows * shape.in, 0.0);
    dw.assign(shape.out * shape.in, 0.0);
    db.assign(shape.out, 0.0);
  }
};

template <bool Parallel>
void BM_Affine(benchmark::State& state) {
  Buffers buf(state);
  for (auto _ : state) {
    if constexpr (Parallel)
      dus::kernels::parallel::affine(buf.shape, buf.x, buf.w, buf.b, buf.y);
    else
      dus::kernels::serial::affine(buf.shape, buf.x, buf.w, buf.b, buf.y);
    benchmark::DoNotOptimize(buf.y.data());
  }
  state.SetItemsProcessed(state.iterations() *
                          static_cast<long long>(buf.shape.rows * buf.shape.in * buf.shape.out));
}

template <bool Parallel>
void BM_InputGrad(benchmark::State& state) {
  Buffers buf(state);
  for (auto _ : state) {
    if constexpr (Parallel)
      dus::kernels::parallel::input_grad(buf.shape, buf.y, buf.w, buf.dx);
    else
      dus::kernels::serial::input_grad(buf.shape, buf.y, buf.w, buf.dx);
    benchmark::DoNotOptimize(buf.dx.data());
  }
}

template <bool Parallel>
void BM_ParamGrad(benchmark::State& state) {
  Buffers buf(state);
  for (auto _ : state) {
    if constexpr (Parallel)
      dus::kernels::parallel::accumulate_param_grad(buf.shape, buf.y, buf.x, buf.dw, buf.db);
    else
      dus::kernels::serial::accumulate_param_grad(buf.shape, buf.y, buf.x, buf.dw, buf.db);
    benchmark::DoNotOptimize(buf.dw.data());
  }
}

template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  Buffers buf(state);
  for (auto _ : state) {
    if constexpr (Parallel)
      dus::kernels::parallel::softmax_rows(buf.shape.rows, buf.shape.out, buf.y);
    else
      dus::kernels::serial::softmax_rows(buf.shape.rows, buf.shape.out, buf.y);
    benchmark::DoNotOptimize(buf.y.data());
  }
}

void Shapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 16, 32});
  b->Args({512, 256, 256});
  b->Args({2048, 512, 512});
}

}  // namespace

BENCHMARK(BM_Affine<false>)->Apply(Shapes);
BENCHMARK(BM_Affine<true>)->Apply(Shapes);
BENCHMARK(BM_InputGrad<false>)->Apply(Shapes);
BENCHMARK(BM_InputGrad<true>)->Apply(Shapes);
BENCHMARK(BM_ParamGrad<false>)->Apply(Shapes);
BENCHMARK(BM_ParamGrad<true>)->Apply(Shapes);
BENCHMARK(BM_Softmax<false>)->Apply(Shapes);
BENCHMARK(BM_Softmax<true>)->Apply(Shapes);

BENCHMARK_MAIN();
