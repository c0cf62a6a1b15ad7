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

#include <set>

#include "aggss/transform.hpp"
#include "test_util.hpp"

namespace aggss {
namespace {

using testing::max_abs_diff;
using testing::random_labels;
using testing::random_tensor;

Tensor apply(const Tensor& images, const kernels::PixelTransform& t) {
  const std::size_t b = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  Tensor out({b, c, h, w});
  const std::vector<kernels::PixelTransform> one{t};
  kernels::serial::expand_transforms(images.values(), b, c, h, w, one, out.values());
  return out;
}

// Plain softmax cross-entropy in double, written independently of the kernels.
double reference_ce(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, double(logits.at(i, j)));
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) s += std::exp(double(logits.at(i, j)) - mx);
    total += mx + std::log(s) - logits.at(i, labels[i]);
  }
  return total / double(rows);
}

TEST(TransformSet, Members) {
  EXPECT_EQ(TransformSet::rotations(1).size(), 1);
  const auto two = TransformSet::rotations(2);
  EXPECT_EQ(two[1].quarter_turns, 2);
  EXPECT_FALSE(two.needs_square());
  const auto eight = TransformSet::rotations(8);
  for (int r = 0; r < 8; ++r) {
    EXPECT_EQ(eight[r].quarter_turns, r % 4);
    EXPECT_EQ(eight[r].flip, r >= 4);
  }
  EXPECT_TRUE(eight.needs_square());
  for (int bad : {0, 3, 5, 16}) EXPECT_THROW(TransformSet::rotations(bad), std::invalid_argument);
}

TEST(Rotation, QuarterTurnOnThreeByThree) {
  const Tensor img({1, 1, 3, 3}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  // Counter-clockwise, as numpy.rot90 / torch.rot90 with k = 1.
  EXPECT_EQ(apply(img, {1, false}).reshaped({9}), Tensor({9}, std::vector<float>{3, 6, 9, 2, 5, 8, 1, 4, 7}));
  EXPECT_EQ(apply(img, {2, false}).reshaped({9}), Tensor({9}, std::vector<float>{9, 8, 7, 6, 5, 4, 3, 2, 1}));
  EXPECT_EQ(apply(img, {3, false}).reshaped({9}), Tensor({9}, std::vector<float>{7, 4, 1, 8, 5, 2, 9, 6, 3}));
  EXPECT_EQ(apply(img, {0, true}).reshaped({9}), Tensor({9}, std::vector<float>{3, 2, 1, 6, 5, 4, 9, 8, 7}));
}

TEST(Rotation, FourQuarterTurnsAreIdentityBitExact) {
  std::mt19937_64 rng(1);
  for (std::size_t s : {1u, 2u, 5u, 8u, 32u}) {
    const Tensor img = random_tensor({2, 3, s, s}, rng, -1e6f, 1e6f);
    Tensor x = img;
    for (int i = 0; i < 4; ++i) x = apply(x, {1, false});
    EXPECT_EQ(x, img);
    EXPECT_EQ(apply(apply(img, {1, false}), {1, false}), apply(img, {2, false}));
    EXPECT_EQ(apply(apply(img, {2, false}), {1, false}), apply(img, {3, false}));
  }
}

TEST(ExpandBatch, InterleavesViewsAndLabels) {
  std::mt19937_64 rng(2);
  const Tensor img = random_tensor({3, 2, 4, 4}, rng);
  const std::vector<int> labels{2, 0, 1};
  const auto ts = TransformSet::rotations(4);
  const ExpandedBatch e = expand_batch(img, labels, 3, ts);
  ASSERT_EQ(e.images.shape(), (Shape{12, 2, 4, 4}));
  EXPECT_EQ(e.source_size(), 3u);
  const std::size_t item = 2 * 4 * 4;
  for (std::size_t i = 0; i < 3; ++i) {
    Tensor one({1, 2, 4, 4});
    std::copy(img.data() + i * item, img.data() + (i + 1) * item, one.data());
    for (int r = 0; r < 4; ++r) {
      EXPECT_EQ(e.labels[i * 4 + r], labels[i] * 4 + r);
      const Tensor view = apply(one, ts[r]);
      EXPECT_TRUE(std::equal(view.data(), view.data() + item, e.images.data() + (i * 4 + r) * item));
    }
  }
}

TEST(ExpandBatch, RejectsBadInput) {
  const auto four = TransformSet::rotations(4);
  EXPECT_THROW(expand_batch(Tensor({1, 1, 4, 6}), std::vector<int>{0}, 2, four), ShapeError);
  EXPECT_NO_THROW(expand_batch(Tensor({1, 1, 4, 6}), std::vector<int>{0}, 2, TransformSet::rotations(2)));
  EXPECT_THROW(expand_batch(Tensor({2, 1, 4, 4}), std::vector<int>{0}, 2, four), ShapeError);
  EXPECT_THROW(expand_batch(Tensor({1, 1, 4, 4}), std::vector<int>{2}, 2, four), std::out_of_range);
}

TEST(RemapLabel, BijectionOntoUnits) {
  for (int m : {1, 2, 4, 8}) {
    for (int k = 1; k <= 200; ++k) {
      std::vector<int> hits(static_cast<std::size_t>(k * m), 0);
      for (int c = 0; c < k; ++c)
        for (int r = 0; r < m; ++r) {
          const int u = remap_label(c, r, m, k);
          ASSERT_GE(u, 0);
          ASSERT_LT(u, k * m);
          ++hits[static_cast<std::size_t>(u)];
        }
      ASSERT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; })) << "K=" << k << " M=" << m;
    }
  }
  EXPECT_THROW(remap_label(3, 0, 4, 3), std::out_of_range);
  EXPECT_THROW(remap_label(0, 4, 4, 3), std::out_of_range);
  EXPECT_THROW(remap_label(-1, 0, 4, 3), std::out_of_range);
}

TEST(AggssLoss, SingleTransformIsCrossEntropy) {
  std::mt19937_64 rng(4);
  const auto ts = TransformSet::rotations(1);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t b = 1 + rng() % 16;
    const int k = 1 + static_cast<int>(rng() % 20);
    const auto labels = random_labels(b, k, rng);
    const ExpandedBatch e = expand_batch(Tensor({b, 1, 2, 2}), labels, k, ts);
    const Tensor raw = random_tensor({b, static_cast<std::size_t>(k)}, rng, -5.0f, 5.0f);
    const double want = reference_ce(raw, labels);
    EXPECT_LE(std::fabs(aggss_loss(e, raw).loss - want), 1e-6 * std::max(1.0, std::fabs(want)));
  }
}

TEST(AggssLoss, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(6);
  const auto ts = TransformSet::rotations(4);
  const std::vector<int> labels{2, 0};
  const ExpandedBatch e = expand_batch(Tensor({2, 1, 3, 3}), labels, 3, ts);
  Tensor raw = random_tensor({8, 12}, rng, -2.0f, 2.0f);
  const Tensor grad = aggss_loss(e, raw).grad;
  const float h = 5e-3f;
  double worst = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const float keep = raw[i];
    raw[i] = keep + h;
    const double up = reference_ce(raw, e.labels);
    raw[i] = keep - h;
    const double down = reference_ce(raw, e.labels);
    raw[i] = keep;
    worst = std::max(worst, std::fabs((up - down) / (2.0 * h) - grad[i]));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(AggregateInference, MatchesDoubleLoopOracle) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = std::vector<int>{1, 2, 4, 8}[trial % 4];
    const std::size_t b = 1 + rng() % 8, k = 1 + rng() % 10;
    const Tensor raw = random_tensor({b * m, k * m}, rng, -3.0f, 3.0f);
    const Tensor got = aggregate_inference(raw, m, true);
    const Tensor sum = aggregate_inference(raw, m, false);
    ASSERT_EQ(got.shape(), (Shape{b, k}));
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t c = 0; c < k; ++c) {
        double acc = 0.0;
        for (int r = 0; r < m; ++r) acc += raw.at(i * m + r, c * m + r);
        EXPECT_NEAR(got.at(i, c), acc / m, 1e-6);
        EXPECT_NEAR(sum.at(i, c), acc, 1e-5);
      }
    EXPECT_EQ(argmax_rows(got), argmax_rows(sum));
  }
}

TEST(AggregateInference, RejectsMisshapenLogits) {
  EXPECT_THROW(aggregate_inference(Tensor({6, 8}), 4), ShapeError);
  EXPECT_THROW(aggregate_inference(Tensor({8, 6}), 4), ShapeError);
}

}  // namespace
}  // namespace aggss
