/* Copyright (c) 2026 The AggSS Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "aggss/kernels.hpp"

namespace k = aggss::kernels;

namespace {

std::vector<float> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<float> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::gemm(k::Trans::no, k::Trans::no, n, n, n, 1.0f, a, b, 0.0f, c);
    else k::serial::gemm(k::Trans::no, k::Trans::no, n, n, n, 1.0f, a, b, 0.0f, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_Im2col(benchmark::State& state) {
  const k::ConvGeometry g{static_cast<std::size_t>(state.range(0)), 32, 32, 3, 1, 1};
  const auto image = random_values(g.channels * g.height * g.width, 3);
  std::vector<float> col(g.col_rows() * g.col_cols());
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::im2col(g, image, col);
    else k::serial::im2col(g, image, col);
    benchmark::DoNotOptimize(col.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(col.size() * sizeof(float)));
}

template <bool Parallel>
void BM_Col2im(benchmark::State& state) {
  const k::ConvGeometry g{static_cast<std::size_t>(state.range(0)), 32, 32, 3, 1, 1};
  const auto col = random_values(g.col_rows() * g.col_cols(), 4);
  std::vector<float> image(g.channels * g.height * g.width);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::col2im(g, col, image);
    else k::serial::col2im(g, col, image);
    benchmark::DoNotOptimize(image.data());
  }
}

template <bool Parallel>
void BM_ExpandTransforms(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0)), c = 3, h = 32, w = 32;
  std::vector<k::PixelTransform> ts;
  for (int r = 0; r < 8; ++r) ts.push_back({r % 4, r >= 4});
  const auto src = random_values(batch * c * h * w, 5);
  std::vector<float> dst(src.size() * ts.size());
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::expand_transforms(src, batch, c, h, w, ts, dst);
    else k::serial::expand_transforms(src, batch, c, h, w, ts, dst);
    benchmark::DoNotOptimize(dst.data());
  }
  state.SetBytesProcessed(state.iterations() * static_cast<int64_t>(dst.size() * sizeof(float)));
}

template <bool Parallel>
void BM_SoftmaxCrossEntropy(benchmark::State& state) {
  const std::size_t rows = static_cast<std::size_t>(state.range(0)), cols = 400;
  const auto logits = random_values(rows * cols, 6);
  std::vector<int> labels(rows);
  for (std::size_t i = 0; i < rows; ++i) labels[i] = static_cast<int>(i % cols);
  std::vector<float> grad(logits.size());
  for (auto _ : state) {
    double loss = 0.0;
    if constexpr (Parallel) loss = k::parallel::softmax_cross_entropy(logits, rows, cols, labels, grad);
    else loss = k::serial::softmax_cross_entropy(logits, rows, cols, labels, grad);
    benchmark::DoNotOptimize(loss);
  }
}

template <bool Parallel>
void BM_AggregateStrided(benchmark::State& state) {
  const std::size_t batch = static_cast<std::size_t>(state.range(0)), classes = 100, m = 4;
  const auto raw = random_values(batch * m * classes * m, 7);
  std::vector<float> out(batch * classes);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::aggregate_strided(raw, batch, classes, m, 0.25f, out);
    else k::serial::aggregate_strided(raw, batch, classes, m, 0.25f, out);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(256)->Arg(512);
BENCHMARK(BM_Im2col<false>)->Name("im2col/serial")->Arg(16)->Arg(64);
BENCHMARK(BM_Im2col<true>)->Name("im2col/parallel")->Arg(16)->Arg(64);
BENCHMARK(BM_Col2im<false>)->Name("col2im/serial")->Arg(16)->Arg(64);
BENCHMARK(BM_Col2im<true>)->Name("col2im/parallel")->Arg(16)->Arg(64);
BENCHMARK(BM_ExpandTransforms<false>)->Name("expand_transforms/serial")->Arg(32)->Arg(128);
BENCHMARK(BM_ExpandTransforms<true>)->Name("expand_transforms/parallel")->Arg(32)->Arg(128);
BENCHMARK(BM_SoftmaxCrossEntropy<false>)->Name("softmax_ce/serial")->Arg(512);
BENCHMARK(BM_SoftmaxCrossEntropy<true>)->Name("softmax_ce/parallel")->Arg(512);
BENCHMARK(BM_AggregateStrided<false>)->Name("aggregate/serial")->Arg(256);
BENCHMARK(BM_AggregateStrided<true>)->Name("aggregate/parallel")->Arg(256);

BENCHMARK_MAIN();
