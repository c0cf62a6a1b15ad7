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

// Layers with hand-written backward passes. Every layer caches what its
// backward needs during forward, so a layer instance serves one caller at a
// time.

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "aggss/tensor.hpp"

namespace aggss::nn {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool decay = true;

  Parameter() = default;
  Parameter(std::string n, Tensor v, bool d = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), decay(d) {}
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool training) = 0;
  /// Returns d(loss)/d(input) and accumulates parameter gradients.
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_parameters(std::vector<Parameter*>&) {}
  /// Non-trainable state that must survive checkpoints (running statistics).
  virtual void collect_buffers(std::vector<Tensor*>&) {}
  virtual std::unique_ptr<Layer> clone() const = 0;
  virtual std::string kind() const = 0;
};

template <class Derived>
class Cloneable : public Layer {
 public:
  std::unique_ptr<Layer> clone() const override {
    return std::make_unique<Derived>(static_cast<const Derived&>(*this));
  }
};

class Conv2d final : public Cloneable<Conv2d> {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t pad, bool bias, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  std::string kind() const override { return "conv2d"; }

  std::size_t out_channels() const { return out_channels_; }
  Parameter& weight() { return weight_; }

 private:
  std::size_t in_channels_, out_channels_, kernel_, stride_, pad_;
  bool has_bias_;
  Parameter weight_, bias_;
  Tensor input_;
};

class BatchNorm2d final : public Cloneable<BatchNorm2d> {
 public:
  explicit BatchNorm2d(std::size_t channels, float momentum = 0.1f, float eps = 1e-5f);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<Tensor*>& out) override;
  std::string kind() const override { return "batchnorm2d"; }

 private:
  std::size_t channels_;
  float momentum_, eps_;
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor normalized_;
  std::vector<float> inv_std_;
  bool trained_pass_ = false;
};

class ReLU final : public Cloneable<ReLU> {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "relu"; }

 private:
  Tensor output_;
};

/// 2x2 max pooling with stride 2.
class MaxPool2d final : public Cloneable<MaxPool2d> {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "maxpool2d"; }

 private:
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

/// (N, C, H, W) -> (N, C).
class GlobalAvgPool final : public Cloneable<GlobalAvgPool> {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  std::string kind() const override { return "global_avg_pool"; }

 private:
  Shape input_shape_;
};

/// y = x W^T + b, W is (out, in).
class Linear final : public Cloneable<Linear> {
 public:
  /// Weights and bias drawn from U(-1/sqrt(in), 1/sqrt(in)).
  Linear(std::size_t in_features, std::size_t out_features, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  std::string kind() const override { return "linear"; }

  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  const Parameter& weight() const { return weight_; }
  const Parameter& bias() const { return bias_; }

 private:
  std::size_t in_, out_;
  Parameter weight_, bias_;
  Tensor input_;
};

class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential&) = delete;
  Sequential(Sequential&&) = default;

  Sequential& add(std::unique_ptr<Layer> layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<Tensor*>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Sequential>(*this); }
  std::string kind() const override { return "sequential"; }
  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// conv3x3-bn-relu-conv3x3-bn plus shortcut, then relu. The shortcut is a
/// 1x1 conv + bn when the shape changes.
class BasicBlock final : public Layer {
 public:
  BasicBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride,
             std::mt19937_64& rng);
  BasicBlock(const BasicBlock& other);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<Tensor*>& out) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BasicBlock>(*this); }
  std::string kind() const override { return "basic_block"; }

 private:
  Sequential main_;
  std::unique_ptr<Sequential> shortcut_;
  ReLU out_relu_;
};

}  // namespace aggss::nn
