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

// OpenMP kernels. Same contracts as the serial reference; results agree to
// float rounding.

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "aggss/kernels.hpp"

namespace aggss::kernels::parallel {
namespace {

constexpr std::size_t kMr = 4;
constexpr std::size_t kNr = 16;
constexpr std::size_t kKc = 256;

// Packs op(B)[p0:p0+kc, :] into column panels of kNr, zero padded.
void pack_b(Trans trans_b, std::size_t n, std::size_t k, std::span<const float> b,
            std::size_t p0, std::size_t kc, float* out) {
  const std::size_t panels = (n + kNr - 1) / kNr;
  for (std::size_t jp = 0; jp < panels; ++jp) {
    float* dst = out + jp * kc * kNr;
    for (std::size_t p = 0; p < kc; ++p)
      for (std::size_t c = 0; c < kNr; ++c) {
        const std::size_t j = jp * kNr + c;
        float v = 0.0f;
        if (j < n) v = trans_b == Trans::yes ? b[j * k + p0 + p] : b[(p0 + p) * n + j];
        dst[p * kNr + c] = v;
      }
  }
}

void pack_a(Trans trans_a, std::size_t m, std::size_t k, std::span<const float> a,
            std::size_t i0, std::size_t p0, std::size_t kc, float* out) {
  for (std::size_t p = 0; p < kc; ++p)
    for (std::size_t r = 0; r < kMr; ++r) {
      const std::size_t i = i0 + r;
      float v = 0.0f;
      if (i < m) v = trans_a == Trans::yes ? a[(p0 + p) * m + i] : a[i * k + p0 + p];
      out[p * kMr + r] = v;
    }
}

inline void micro_kernel(std::size_t kc, const float* __restrict ap, const float* __restrict bp,
                         float (&acc)[kMr][kNr]) {
  for (std::size_t r = 0; r < kMr; ++r)
    for (std::size_t c = 0; c < kNr; ++c) acc[r][c] = 0.0f;
  for (std::size_t p = 0; p < kc; ++p) {
    const float* brow = bp + p * kNr;
    for (std::size_t r = 0; r < kMr; ++r) {
      const float av = ap[p * kMr + r];
#pragma omp simd
      for (std::size_t c = 0; c < kNr; ++c) acc[r][c] += av * brow[c];
    }
  }
}

}  // namespace

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          float alpha, std::span<const float> a, std::span<const float> b, float beta,
          std::span<float> c) {
  if (beta == 0.0f) {
    std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(m * n), 0.0f);
  } else if (beta != 1.0f) {
    for (std::size_t i = 0; i < m * n; ++i) c[i] *= beta;
  }
  if (k == 0 || m == 0 || n == 0) return;

  const std::size_t n_panels = (n + kNr - 1) / kNr;
  const std::size_t m_panels = (m + kMr - 1) / kMr;
  std::vector<float> bpack(n_panels * std::min(k, kKc) * kNr);

  for (std::size_t p0 = 0; p0 < k; p0 += kKc) {
    const std::size_t kc = std::min(kKc, k - p0);
    pack_b(trans_b, n, k, b, p0, kc, bpack.data());
#pragma omp parallel
    {
      std::vector<float> apack(kc * kMr);
      float acc[kMr][kNr];
#pragma omp for schedule(static)
      for (std::size_t ip = 0; ip < m_panels; ++ip) {
        const std::size_t i0 = ip * kMr;
        pack_a(trans_a, m, k, a, i0, p0, kc, apack.data());
        for (std::size_t jp = 0; jp < n_panels; ++jp) {
          micro_kernel(kc, apack.data(), bpack.data() + jp * kc * kNr, acc);
          const std::size_t rows = std::min(kMr, m - i0);
          const std::size_t cols = std::min(kNr, n - jp * kNr);
          for (std::size_t r = 0; r < rows; ++r) {
            float* crow = c.data() + (i0 + r) * n + jp * kNr;
            for (std::size_t cc = 0; cc < cols; ++cc) crow[cc] += alpha * acc[r][cc];
          }
        }
      }
    }
  }
}

void im2col(const ConvGeometry& g, std::span<const float> image, std::span<float> col) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  const std::size_t rows = g.col_rows();
#pragma omp parallel for schedule(static)
  for (std::size_t row = 0; row < rows; ++row) {
    const std::size_t kj = row % g.kernel;
    const std::size_t ki = (row / g.kernel) % g.kernel;
    const std::size_t ch = row / (g.kernel * g.kernel);
    const float* plane = image.data() + ch * g.height * g.width;
    float* out = col.data() + row * oh * ow;
    for (std::size_t y = 0; y < oh; ++y) {
      const long iy = static_cast<long>(y * g.stride + ki) - static_cast<long>(g.pad);
      float* orow = out + y * ow;
      if (iy < 0 || iy >= static_cast<long>(g.height)) {
        std::fill(orow, orow + ow, 0.0f);
        continue;
      }
      const float* irow = plane + iy * g.width;
      for (std::size_t x = 0; x < ow; ++x) {
        const long ix = static_cast<long>(x * g.stride + kj) - static_cast<long>(g.pad);
        orow[x] = (ix >= 0 && ix < static_cast<long>(g.width)) ? irow[ix] : 0.0f;
      }
    }
  }
}

void col2im(const ConvGeometry& g, std::span<const float> col, std::span<float> image) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  // One thread per channel keeps the accumulation race free.
#pragma omp parallel for schedule(static)
  for (std::size_t ch = 0; ch < g.channels; ++ch) {
    float* plane = image.data() + ch * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki)
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const std::size_t row = (ch * g.kernel + ki) * g.kernel + kj;
        const float* in = col.data() + row * oh * ow;
        for (std::size_t y = 0; y < oh; ++y) {
          const long iy = static_cast<long>(y * g.stride + ki) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.height)) continue;
          float* prow = plane + iy * g.width;
          for (std::size_t x = 0; x < ow; ++x) {
            const long ix = static_cast<long>(x * g.stride + kj) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.width)) prow[ix] += in[y * ow + x];
          }
        }
      }
  }
}

void expand_transforms(std::span<const float> src, std::size_t batch, std::size_t channels,
                       std::size_t height, std::size_t width,
                       std::span<const PixelTransform> transforms, std::span<float> dst) {
  const std::size_t m = transforms.size();
  const std::size_t plane = height * width;
  const std::size_t jobs = batch * m;
#pragma omp parallel for schedule(static)
  for (std::size_t job = 0; job < jobs; ++job) {
    const std::size_t b = job / m, r = job % m;
    const PixelTransform t = transforms[r];
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const float* in = src.data() + (b * channels + ch) * plane;
      float* out = dst.data() + (job * channels + ch) * plane;
      if (t.quarter_turns % 4 == 0 && !t.flip) {
        std::copy(in, in + plane, out);
        continue;
      }
      for (std::size_t i = 0; i < height; ++i)
        for (std::size_t j = 0; j < width; ++j) {
          std::size_t si = 0, sj = 0;
          transform_source(t, height, width, i, j, si, sj);
          out[i * width + j] = in[si * width + sj];
        }
    }
  }
}

void aggregate_strided(std::span<const float> raw, std::size_t batch, std::size_t classes,
                       std::size_t transforms, float scale, std::span<float> out) {
  const std::size_t width = classes * transforms;
#pragma omp parallel for schedule(static)
  for (std::size_t b = 0; b < batch; ++b) {
    float* dst = out.data() + b * classes;
    std::fill(dst, dst + classes, 0.0f);
    // Row b*M + r contributes its r-th unit of every class: raw[.., r::M].
    for (std::size_t r = 0; r < transforms; ++r) {
      const float* src = raw.data() + (b * transforms + r) * width + r;
      for (std::size_t c = 0; c < classes; ++c) dst[c] += src[c * transforms];
    }
    for (std::size_t c = 0; c < classes; ++c) dst[c] *= scale;
  }
}

double softmax_cross_entropy(std::span<const float> logits, std::size_t rows, std::size_t cols,
                             std::span<const int> labels, std::span<float> grad) {
  double total = 0.0;
  const bool want_grad = !grad.empty();
#pragma omp parallel for schedule(static) reduction(+ : total)
  for (std::size_t i = 0; i < rows; ++i) {
    const float* z = logits.data() + i * cols;
    float mx = *std::max_element(z, z + cols);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(static_cast<double>(z[j] - mx));
    const double log_norm = mx + std::log(sum);
    total += log_norm - z[labels[i]];
    if (want_grad) {
      float* g = grad.data() + i * cols;
      const double inv_rows = 1.0 / static_cast<double>(rows);
      for (std::size_t j = 0; j < cols; ++j)
        g[j] = static_cast<float>(std::exp(z[j] - log_norm) * inv_rows);
      g[labels[i]] -= static_cast<float>(inv_rows);
    }
  }
  return total / static_cast<double>(rows);
}

}  // namespace aggss::kernels::parallel
