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

// Reference kernels. Straight loops, no blocking, no threads.

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "aggss/kernels.hpp"

namespace aggss::kernels::serial {

void gemm(Trans trans_a, Trans trans_b, std::size_t m, std::size_t n, std::size_t k,
          float alpha, std::span<const float> a, std::span<const float> b, float beta,
          std::span<float> c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const float av = trans_a == Trans::yes ? a[p * m + i] : a[i * k + p];
        const float bv = trans_b == Trans::yes ? b[j * k + p] : b[p * n + j];
        acc += static_cast<double>(av) * bv;
      }
      const float prev = beta == 0.0f ? 0.0f : beta * c[i * n + j];
      c[i * n + j] = prev + alpha * static_cast<float>(acc);
    }
  }
}

void im2col(const ConvGeometry& g, std::span<const float> image, std::span<float> col) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t ch = 0; ch < g.channels; ++ch)
    for (std::size_t ki = 0; ki < g.kernel; ++ki)
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const std::size_t row = (ch * g.kernel + ki) * g.kernel + kj;
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t x = 0; x < ow; ++x) {
            const long iy = static_cast<long>(y * g.stride + ki) - static_cast<long>(g.pad);
            const long ix = static_cast<long>(x * g.stride + kj) - static_cast<long>(g.pad);
            float v = 0.0f;
            if (iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) &&
                ix < static_cast<long>(g.width))
              v = image[(ch * g.height + iy) * g.width + ix];
            col[row * oh * ow + y * ow + x] = v;
          }
      }
}

void col2im(const ConvGeometry& g, std::span<const float> col, std::span<float> image) {
  const std::size_t oh = g.out_height(), ow = g.out_width();
  for (std::size_t ch = 0; ch < g.channels; ++ch)
    for (std::size_t ki = 0; ki < g.kernel; ++ki)
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const std::size_t row = (ch * g.kernel + ki) * g.kernel + kj;
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t x = 0; x < ow; ++x) {
            const long iy = static_cast<long>(y * g.stride + ki) - static_cast<long>(g.pad);
            const long ix = static_cast<long>(x * g.stride + kj) - static_cast<long>(g.pad);
            if (iy >= 0 && ix >= 0 && iy < static_cast<long>(g.height) &&
                ix < static_cast<long>(g.width))
              image[(ch * g.height + iy) * g.width + ix] += col[row * oh * ow + y * ow + x];
          }
      }
}

void expand_transforms(std::span<const float> src, std::size_t batch, std::size_t channels,
                       std::size_t height, std::size_t width,
                       std::span<const PixelTransform> transforms, std::span<float> dst) {
  const std::size_t m = transforms.size();
  const std::size_t plane = height * width;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t ch = 0; ch < channels; ++ch) {
        const float* in = src.data() + (b * channels + ch) * plane;
        float* out = dst.data() + ((b * m + r) * channels + ch) * plane;
        for (std::size_t i = 0; i < height; ++i)
          for (std::size_t j = 0; j < width; ++j) {
            std::size_t si = 0, sj = 0;
            transform_source(transforms[r], height, width, i, j, si, sj);
            out[i * width + j] = in[si * width + sj];
          }
      }
}

void aggregate_strided(std::span<const float> raw, std::size_t batch, std::size_t classes,
                       std::size_t transforms, float scale, std::span<float> out) {
  const std::size_t width = classes * transforms;
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < classes; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < transforms; ++r)
        acc += raw[(b * transforms + r) * width + c * transforms + r];
      out[b * classes + c] = static_cast<float>(scale * acc);
    }
}

double softmax_cross_entropy(std::span<const float> logits, std::size_t rows, std::size_t cols,
                             std::span<const int> labels, std::span<float> grad) {
  double total = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    const float* z = logits.data() + i * cols;
    double mx = z[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, static_cast<double>(z[j]));
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(z[j] - mx);
    const double log_norm = mx + std::log(sum);
    total += log_norm - z[labels[i]];
    if (!grad.empty())
      for (std::size_t j = 0; j < cols; ++j) {
        const double p = std::exp(z[j] - log_norm);
        grad[i * cols + j] =
            static_cast<float>((p - (static_cast<int>(j) == labels[i] ? 1.0 : 0.0)) / rows);
      }
  }
  return total / static_cast<double>(rows);
}

}  // namespace aggss::kernels::serial
