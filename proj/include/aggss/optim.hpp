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

#include <vector>

#include "aggss/nn.hpp"

namespace aggss {

/// SGD with heavy-ball momentum and L2 weight decay (PyTorch convention:
/// v = mu * v + (g + wd * w); w -= lr * v).
class Sgd {
 public:
  Sgd(std::vector<nn::Parameter*> params, double momentum, double weight_decay);
  void step(double learning_rate);
  /// Rescales all gradients so their joint L2 norm is at most max_norm.
  /// Returns the norm before clipping.
  double clip_grad_norm(double max_norm);

 private:
  std::vector<nn::Parameter*> params_;
  std::vector<Tensor> velocity_;
  double momentum_, weight_decay_;
};

/// Step decay: lr = base * factor^(number of milestones <= epoch).
double multistep_lr(double base, const std::vector<int>& milestones, double factor, int epoch);

}  // namespace aggss
