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

#include <gtest/gtest.h>

#include "aggss/kernels.hpp"
#include "test_util.hpp"

namespace aggss {
namespace {

using kernels::Trans;
using testing::max_abs_diff;
using testing::random_tensor;

struct GemmCase {
  std::size_t m, n, k;
  Trans ta, tb;
};

class GemmTest : public ::testing::TestWithParam<GemmCase> {};

TEST_P(GemmTest, ParallelMatchesSerial) {
  const auto p = GetParam();
  std::mt19937_64 rng(p.m * 131 + p.n * 17 + p.k);
  const Tensor a = random_tensor({p.m * p.k}, rng);
  const Tensor b = random_tensor({p.k * p.n}, rng);
  Tensor c0 = random_tensor({p.m * p.n}, rng);
  Tensor c1 = c0;
  kernels::serial::gemm(p.ta, p.tb, p.m, p.n, p.k, 0.7f, a.values(), b.values(), 0.3f, c0.values());
  kernels::parallel::gemm(p.ta, p.tb, p.m, p.n, p.k, 0.7f, a.values(), b.values(), 0.3f, c1.values());
  EXPECT_LT(max_abs_diff(c0, c1), 1e-4 * std::sqrt(static_cast<double>(p.k)));
}

TEST_P(GemmTest, BetaZeroIgnoresGarbage) {
  const auto p = GetParam();
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({p.m * p.k}, rng);
  const Tensor b = random_tensor({p.k * p.n}, rng);
  Tensor c0({p.m * p.n}, 0.0f);
  Tensor c1({p.m * p.n}, std::nanf(""));
  kernels::serial::gemm(p.ta, p.tb, p.m, p.n, p.k, 1.0f, a.values(), b.values(), 0.0f, c0.values());
  kernels::parallel::gemm(p.ta, p.tb, p.m, p.n, p.k, 1.0f, a.values(), b.values(), 0.0f, c1.values());
  EXPECT_LT(max_abs_diff(c0, c1), 1e-3);
}

INSTANTIATE_TEST_SUITE_P(
    Shapes, GemmTest,
    ::testing::Values(GemmCase{1, 1, 1, Trans::no, Trans::no}, GemmCase{3, 5, 7, Trans::no, Trans::no},
                      GemmCase{17, 33, 9, Trans::yes, Trans::no}, GemmCase{16, 16, 300, Trans::no, Trans::yes},
                      GemmCase{37, 70, 513, Trans::yes, Trans::yes}, GemmCase{64, 1, 27, Trans::no, Trans::no},
                      GemmCase{5, 129, 260, Trans::no, Trans::yes}));

TEST(Im2col, ParallelMatchesSerialAndCol2imIsAdjoint) {
  std::mt19937_64 rng(11);
  for (const auto& g : {kernels::ConvGeometry{3, 8, 8, 3, 1, 1}, kernels::ConvGeometry{2, 7, 5, 3, 2, 1},
                        kernels::ConvGeometry{4, 6, 6, 1, 2, 0}}) {
    const Tensor img = random_tensor({g.channels * g.height * g.width}, rng);
    Tensor c0({g.col_rows() * g.col_cols()}), c1 = c0;
    kernels::serial::im2col(g, img.values(), c0.values());
    kernels::parallel::im2col(g, img.values(), c1.values());
    EXPECT_EQ(c0, c1);

    // <im2col(x), y> == <x, col2im(y)>
    const Tensor y = random_tensor(c0.shape(), rng);
    Tensor back0({img.size()}), back1({img.size()});
    kernels::serial::col2im(g, y.values(), back0.values());
    kernels::parallel::col2im(g, y.values(), back1.values());
    EXPECT_LT(max_abs_diff(back0, back1), 1e-5);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += double(c0[i]) * y[i];
    for (std::size_t i = 0; i < img.size(); ++i) rhs += double(img[i]) * back0[i];
    EXPECT_NEAR(lhs, rhs, 1e-4);
  }
}

TEST(ExpandTransforms, ParallelMatchesSerial) {
  std::mt19937_64 rng(5);
  const std::vector<kernels::PixelTransform> ts{{0, false}, {1, false}, {2, false}, {3, false},
                                                {0, true},  {1, true},  {2, true},  {3, true}};
  const Tensor src = random_tensor({3 * 2 * 6 * 6}, rng);
  Tensor d0({3 * 8 * 2 * 6 * 6}), d1 = d0;
  kernels::serial::expand_transforms(src.values(), 3, 2, 6, 6, ts, d0.values());
  kernels::parallel::expand_transforms(src.values(), 3, 2, 6, 6, ts, d1.values());
  EXPECT_EQ(d0, d1);
}

TEST(AggregateStrided, ParallelMatchesSerial) {
  std::mt19937_64 rng(8);
  const Tensor raw = random_tensor({5 * 4 * 7 * 4}, rng);
  Tensor o0({5 * 7}), o1 = o0;
  kernels::serial::aggregate_strided(raw.values(), 5, 7, 4, 0.25f, o0.values());
  kernels::parallel::aggregate_strided(raw.values(), 5, 7, 4, 0.25f, o1.values());
  EXPECT_LT(max_abs_diff(o0, o1), 1e-6);
}

TEST(SoftmaxCrossEntropy, ParallelMatchesSerial) {
  std::mt19937_64 rng(9);
  const Tensor logits = random_tensor({12 * 10}, rng, -20.0f, 20.0f);
  const auto labels = testing::random_labels(12, 10, rng);
  Tensor g0({12 * 10}), g1 = g0;
  const double l0 = kernels::serial::softmax_cross_entropy(logits.values(), 12, 10, labels, g0.values());
  const double l1 = kernels::parallel::softmax_cross_entropy(logits.values(), 12, 10, labels, g1.values());
  EXPECT_NEAR(l0, l1, 1e-9 * std::max(1.0, l0));
  EXPECT_LT(max_abs_diff(g0, g1), 1e-7);
}

TEST(SoftmaxCrossEntropy, LargeLogitsStayFinite) {
  const std::vector<float> logits{1000.0f, -1000.0f, 0.0f};
  const std::vector<int> labels{1};
  std::vector<float> grad(3);
  const double loss = kernels::parallel::softmax_cross_entropy(logits, 1, 3, labels, grad);
  EXPECT_NEAR(loss, 2000.0, 1e-6);
  for (float g : grad) EXPECT_TRUE(std::isfinite(g));
}

}  // namespace
}  // namespace aggss
