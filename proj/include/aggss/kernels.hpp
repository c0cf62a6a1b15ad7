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

#pragma once

// Numeric kernels used by the network and the rotation machinery.
//
// Every kernel exists twice with an identical signature: `serial` is the
// plain reference used by the tests, `parallel` is the OpenMP version the
// library calls. All arrays are dense and row-major.

#include <cstddef>
#include <span>

namespace aggss::kernels {

enum class Trans { no, yes };

/// Lossless pixel permutation: optional horizontal flip, then
/// `quarter_turns` counter-clockwise 90 degree rotations over (H, W).
struct PixelTransform {
  int quarter_turns = 0;
  bool flip = false;
  bool operator==(const PixelTransform&) const = default;
};

struct ConvGeometry {
  std::size_t channels = 0, height = 0, width = 0;
  std::size_t kernel = 3, stride = 1, pad = 1;

  std::size_t out_height() const { return (height + 2 * pad - kernel) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return out_height() * out_width(); }
};

#define AGGSS_KERNEL_DECLS                                                           \
  /* C = alpha * op(A) * op(B) + beta * C, op(A) is m x k, op(B) is k x n. */        \
  void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n,             \
            std::size_t k, float alpha, std::span<const float> a,                   \
            std::span<const float> b, float beta, std::span<float> c);              \
  void im2col(const ConvGeometry& g, std::span<const float> image,                  \
              std::span<float> col);                                                \
  /* Accumulates into `image`. */                                                   \
  void col2im(const ConvGeometry& g, std::span<const float> col,                    \
              std::span<float> image);                                              \
  /* dst row i*M + r = transforms[r](src row i). */                                 \
  void expand_transforms(std::span<const float> src, std::size_t batch,             \
                         std::size_t channels, std::size_t height,                  \
                         std::size_t width,                                         \
                         std::span<const PixelTransform> transforms,                \
                         std::span<float> dst);                                     \
  /* out[b][c] = scale * sum_r raw[b*M + r][c*M + r]. */                            \
  void aggregate_strided(std::span<const float> raw, std::size_t batch,             \
                         std::size_t classes, std::size_t transforms, float scale,  \
                         std::span<float> out);                                     \
  /* Mean softmax cross-entropy over rows; writes d(loss)/d(logits) when */         \
  /* `grad` is non-empty. */                                                        \
  double softmax_cross_entropy(std::span<const float> logits, std::size_t rows,     \
                               std::size_t cols, std::span<const int> labels,       \
                               std::span<float> grad);

namespace serial {
AGGSS_KERNEL_DECLS
}  // namespace serial

namespace parallel {
AGGSS_KERNEL_DECLS
}  // namespace parallel

#undef AGGSS_KERNEL_DECLS

/// Source pixel (si, sj) that lands on destination (i, j) under `t`.
/// Odd quarter turns require height == width; callers check that.
inline void transform_source(const PixelTransform& t, std::size_t height,
                             std::size_t width, std::size_t i, std::size_t j,
                             std::size_t& si, std::size_t& sj) {
  switch (((t.quarter_turns % 4) + 4) % 4) {
    case 0: si = i; sj = j; break;
    case 1: si = j; sj = width - 1 - i; break;
    case 2: si = height - 1 - i; sj = width - 1 - j; break;
    default: si = height - 1 - j; sj = i; break;
  }
  if (t.flip) sj = width - 1 - sj;
}

}  // namespace aggss::kernels
