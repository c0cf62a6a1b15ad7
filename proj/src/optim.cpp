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

#include "aggss/optim.hpp"

#include <cmath>

namespace aggss {

Sgd::Sgd(std::vector<nn::Parameter*> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (auto* p : params_) velocity_.emplace_back(p->value.shape());
}

void Sgd::step(double learning_rate) {
  const auto lr = static_cast<float>(learning_rate);
  const auto mu = static_cast<float>(momentum_);
  const auto wd = static_cast<float>(weight_decay_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = *params_[i];
    auto& v = velocity_[i];
    const float decay = p.decay ? wd : 0.0f;
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const float g = p.grad[j] + decay * p.value[j];
      v[j] = mu * v[j] + g;
      p.value[j] -= lr * v[j];
    }
  }
}

double Sgd::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (auto* p : params_)
    for (float g : p->grad.values()) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const auto scale = static_cast<float>(max_norm / norm);
    for (auto* p : params_)
      for (auto& g : p->grad.values()) g *= scale;
  }
  return norm;
}

double multistep_lr(double base, const std::vector<int>& milestones, double factor, int epoch) {
  double lr = base;
  for (int m : milestones)
    if (epoch >= m) lr *= factor;
  return lr;
}

}  // namespace aggss
