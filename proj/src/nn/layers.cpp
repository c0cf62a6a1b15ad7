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

#include <algorithm>
#include <cmath>
#include <limits>

#include "aggss/kernels.hpp"
#include "aggss/nn.hpp"

namespace aggss::nn {

namespace k = aggss::kernels::parallel;
using kernels::ConvGeometry;
using kernels::Trans;

namespace {

void require_rank(const Tensor& x, std::size_t rank, const char* who) {
  if (x.rank() != rank)
    throw ShapeError(std::string(who) + ": expected rank " + std::to_string(rank) +
                     " input, got " + shape_string(x.shape()));
}

}  // namespace

// ---- Conv2d ---------------------------------------------------------------

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, std::size_t pad, bool bias, std::mt19937_64& rng)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      pad_(pad),
      has_bias_(bias) {
  // He initialisation, fan-out mode.
  const double stddev = std::sqrt(2.0 / static_cast<double>(out_channels * kernel * kernel));
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor w({out_channels, in_channels, kernel, kernel});
  for (auto& v : w.values()) v = static_cast<float>(dist(rng));
  weight_ = Parameter("weight", std::move(w));
  if (has_bias_) bias_ = Parameter("bias", Tensor({out_channels}), false);
}

Tensor Conv2d::forward(const Tensor& x, bool) {
  require_rank(x, 4, "conv2d");
  if (x.dim(1) != in_channels_)
    throw ShapeError("conv2d: expected " + std::to_string(in_channels_) + " channels, got " +
                     shape_string(x.shape()));
  input_ = x;
  const ConvGeometry g{in_channels_, x.dim(2), x.dim(3), kernel_, stride_, pad_};
  const std::size_t n = x.dim(0), oh = g.out_height(), ow = g.out_width();
  Tensor out({n, out_channels_, oh, ow});
  std::vector<float> col(g.col_rows() * g.col_cols());
  const std::size_t in_stride = in_channels_ * g.height * g.width;
  const std::size_t out_stride = out_channels_ * oh * ow;
  for (std::size_t i = 0; i < n; ++i) {
    k::im2col(g, x.values().subspan(i * in_stride, in_stride), col);
    k::gemm(Trans::no, Trans::no, out_channels_, oh * ow, g.col_rows(), 1.0f, weight_.value.values(),
            col, 0.0f, out.values().subspan(i * out_stride, out_stride));
    if (has_bias_) {
      float* o = out.data() + i * out_stride;
      for (std::size_t c = 0; c < out_channels_; ++c)
        for (std::size_t p = 0; p < oh * ow; ++p) o[c * oh * ow + p] += bias_.value[c];
    }
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const ConvGeometry g{in_channels_, input_.dim(2), input_.dim(3), kernel_, stride_, pad_};
  const std::size_t n = input_.dim(0), oh = g.out_height(), ow = g.out_width();
  require_shape(grad_out, {n, out_channels_, oh, ow}, "conv2d backward");
  Tensor grad_in(input_.shape());
  std::vector<float> col(g.col_rows() * g.col_cols());
  const std::size_t in_stride = in_channels_ * g.height * g.width;
  const std::size_t out_stride = out_channels_ * oh * ow;
  for (std::size_t i = 0; i < n; ++i) {
    const auto dy = grad_out.values().subspan(i * out_stride, out_stride);
    k::im2col(g, input_.values().subspan(i * in_stride, in_stride), col);
    k::gemm(Trans::no, Trans::yes, out_channels_, g.col_rows(), oh * ow, 1.0f, dy, col, 1.0f,
            weight_.grad.values());
    k::gemm(Trans::yes, Trans::no, g.col_rows(), oh * ow, out_channels_, 1.0f,
            weight_.value.values(), dy, 0.0f, col);
    k::col2im(g, col, grad_in.values().subspan(i * in_stride, in_stride));
    if (has_bias_)
      for (std::size_t c = 0; c < out_channels_; ++c)
        for (std::size_t p = 0; p < oh * ow; ++p) bias_.grad[c] += dy[c * oh * ow + p];
  }
  return grad_in;
}

void Conv2d::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

// ---- BatchNorm2d ----------------------------------------------------------

BatchNorm2d::BatchNorm2d(std::size_t channels, float momentum, float eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_("gamma", Tensor({channels}, 1.0f), false),
      beta_("beta", Tensor({channels}), false),
      running_mean_({channels}),
      running_var_({channels}, 1.0f) {}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
  require_rank(x, 4, "batchnorm2d");
  if (x.dim(1) != channels_) throw ShapeError("batchnorm2d: channel mismatch");
  const std::size_t n = x.dim(0), plane = x.dim(2) * x.dim(3);
  const double count = static_cast<double>(n * plane);
  Tensor out(x.shape());
  normalized_ = Tensor(x.shape());
  inv_std_.assign(channels_, 0.0f);
  trained_pass_ = training;
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < channels_; ++c) {
    double mean = running_mean_[c], var = running_var_[c];
    if (training) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const float* p = x.data() + (i * channels_ + c) * plane;
        for (std::size_t j = 0; j < plane; ++j) {
          s += p[j];
          s2 += static_cast<double>(p[j]) * p[j];
        }
      }
      mean = s / count;
      var = std::max(0.0, s2 / count - mean * mean);
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      running_mean_[c] = static_cast<float>((1 - momentum_) * running_mean_[c] + momentum_ * mean);
      running_var_[c] = static_cast<float>((1 - momentum_) * running_var_[c] + momentum_ * unbiased);
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(var + eps_));
    inv_std_[c] = inv;
    const float g = gamma_.value[c], b = beta_.value[c], mu = static_cast<float>(mean);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * channels_ + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        const float xh = (x[off + j] - mu) * inv;
        normalized_[off + j] = xh;
        out[off + j] = g * xh + b;
      }
    }
  }
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
  require_shape(grad_out, normalized_.shape(), "batchnorm2d backward");
  const std::size_t n = grad_out.dim(0), plane = grad_out.dim(2) * grad_out.dim(3);
  const double count = static_cast<double>(n * plane);
  Tensor grad_in(grad_out.shape());
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * channels_ + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        sum_dy += grad_out[off + j];
        sum_dy_xh += static_cast<double>(grad_out[off + j]) * normalized_[off + j];
      }
    }
    gamma_.grad[c] += static_cast<float>(sum_dy_xh);
    beta_.grad[c] += static_cast<float>(sum_dy);
    const float scale = gamma_.value[c] * inv_std_[c];
    const float mean_dy = static_cast<float>(sum_dy / count);
    const float mean_dy_xh = static_cast<float>(sum_dy_xh / count);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * channels_ + c) * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        grad_in[off + j] = trained_pass_
                               ? scale * (grad_out[off + j] - mean_dy - normalized_[off + j] * mean_dy_xh)
                               : scale * grad_out[off + j];
      }
    }
  }
  return grad_in;
}

void BatchNorm2d::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void BatchNorm2d::collect_buffers(std::vector<Tensor*>& out) {
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

// ---- ReLU / pooling -------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, bool) {
  output_ = x;
  for (auto& v : output_.values()) v = v > 0.0f ? v : 0.0f;
  return output_;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  require_shape(grad_out, output_.shape(), "relu backward");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (output_[i] <= 0.0f) g[i] = 0.0f;
  return g;
}

Tensor MaxPool2d::forward(const Tensor& x, bool) {
  require_rank(x, 4, "maxpool2d");
  input_shape_ = x.shape();
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = h / 2, ow = w / 2;
  Tensor out({n, c, oh, ow});
  argmax_.assign(out.size(), 0);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const float* in = x.data() + plane * h * w;
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo) {
        std::size_t best = (2 * y) * w + 2 * xo;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = (2 * y + dy) * w + 2 * xo + dx;
            if (in[idx] > in[best]) best = idx;
          }
        const std::size_t o = (plane * oh + y) * ow + xo;
        out[o] = in[best];
        argmax_[o] = plane * h * w + best;
      }
  }
  return out;
}

Tensor MaxPool2d::backward(const Tensor& grad_out) {
  Tensor g(input_shape_);
  for (std::size_t i = 0; i < grad_out.size(); ++i) g[argmax_[i]] += grad_out[i];
  return g;
}

Tensor GlobalAvgPool::forward(const Tensor& x, bool) {
  require_rank(x, 4, "global_avg_pool");
  input_shape_ = x.shape();
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor out({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < plane; ++j) s += x[i * plane + j];
    out[i] = static_cast<float>(s / static_cast<double>(plane));
  }
  return out;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  Tensor g(input_shape_);
  const std::size_t plane = input_shape_[2] * input_shape_[3];
  const float inv = 1.0f / static_cast<float>(plane);
  for (std::size_t i = 0; i < grad_out.size(); ++i)
    for (std::size_t j = 0; j < plane; ++j) g[i * plane + j] = grad_out[i] * inv;
  return g;
}

// ---- Linear ---------------------------------------------------------------

Linear::Linear(std::size_t in_features, std::size_t out_features, std::mt19937_64& rng)
    : in_(in_features), out_(out_features) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w({out_features, in_features});
  for (auto& v : w.values()) v = static_cast<float>(dist(rng));
  Tensor b({out_features});
  for (auto& v : b.values()) v = static_cast<float>(dist(rng));
  weight_ = Parameter("weight", std::move(w));
  bias_ = Parameter("bias", std::move(b), false);
}

Tensor Linear::forward(const Tensor& x, bool) {
  require_rank(x, 2, "linear");
  if (x.dim(1) != in_) throw ShapeError("linear: expected " + std::to_string(in_) + " features");
  input_ = x;
  const std::size_t n = x.dim(0);
  Tensor out({n, out_});
  for (std::size_t i = 0; i < n; ++i)
    std::copy(bias_.value.data(), bias_.value.data() + out_, out.data() + i * out_);
  k::gemm(Trans::no, Trans::yes, n, out_, in_, 1.0f, x.values(), weight_.value.values(), 1.0f,
          out.values());
  return out;
}

Tensor Linear::backward(const Tensor& grad_out) {
  const std::size_t n = input_.dim(0);
  require_shape(grad_out, {n, out_}, "linear backward");
  k::gemm(Trans::yes, Trans::no, out_, in_, n, 1.0f, grad_out.values(), input_.values(), 1.0f,
          weight_.grad.values());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < out_; ++j) bias_.grad[j] += grad_out[i * out_ + j];
  Tensor grad_in({n, in_});
  k::gemm(Trans::no, Trans::no, n, in_, out_, 1.0f, grad_out.values(), weight_.value.values(),
          0.0f, grad_in.values());
  return grad_in;
}

void Linear::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---- Sequential / BasicBlock ----------------------------------------------

Sequential::Sequential(const Sequential& other) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Tensor Sequential::forward(const Tensor& x, bool training) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, training);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect_parameters(std::vector<Parameter*>& out) {
  for (auto& l : layers_) l->collect_parameters(out);
}

void Sequential::collect_buffers(std::vector<Tensor*>& out) {
  for (auto& l : layers_) l->collect_buffers(out);
}

BasicBlock::BasicBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride,
                       std::mt19937_64& rng) {
  main_.add(std::make_unique<Conv2d>(in_channels, out_channels, 3, stride, 1, false, rng))
      .add(std::make_unique<BatchNorm2d>(out_channels))
      .add(std::make_unique<ReLU>())
      .add(std::make_unique<Conv2d>(out_channels, out_channels, 3, 1, 1, false, rng))
      .add(std::make_unique<BatchNorm2d>(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    shortcut_ = std::make_unique<Sequential>();
    shortcut_->add(std::make_unique<Conv2d>(in_channels, out_channels, 1, stride, 0, false, rng))
        .add(std::make_unique<BatchNorm2d>(out_channels));
  }
}

BasicBlock::BasicBlock(const BasicBlock& other)
    : main_(other.main_),
      shortcut_(other.shortcut_ ? std::make_unique<Sequential>(*other.shortcut_) : nullptr),
      out_relu_(other.out_relu_) {}

Tensor BasicBlock::forward(const Tensor& x, bool training) {
  Tensor y = main_.forward(x, training);
  const Tensor skip = shortcut_ ? shortcut_->forward(x, training) : x;
  require_shape(skip, y.shape(), "basic_block shortcut");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += skip[i];
  return out_relu_.forward(y, training);
}

Tensor BasicBlock::backward(const Tensor& grad_out) {
  const Tensor g = out_relu_.backward(grad_out);
  Tensor dx = main_.backward(g);
  const Tensor dskip = shortcut_ ? shortcut_->backward(g) : g;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dskip[i];
  return dx;
}

void BasicBlock::collect_parameters(std::vector<Parameter*>& out) {
  main_.collect_parameters(out);
  if (shortcut_) shortcut_->collect_parameters(out);
}

void BasicBlock::collect_buffers(std::vector<Tensor*>& out) {
  main_.collect_buffers(out);
  if (shortcut_) shortcut_->collect_buffers(out);
}

}  // namespace aggss::nn
