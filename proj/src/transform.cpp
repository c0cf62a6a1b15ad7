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

#include "aggss/transform.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace aggss {

TransformSet TransformSet::rotations(int count) {
  using kernels::PixelTransform;
  switch (count) {
    case 1: return TransformSet({PixelTransform{0, false}});
    case 2: return TransformSet({PixelTransform{0, false}, PixelTransform{2, false}});
    case 4:
    case 8: {
      std::vector<PixelTransform> t;
      for (int r = 0; r < count; ++r) t.push_back({r % 4, r >= 4});
      return TransformSet(std::move(t));
    }
    default:
      throw std::invalid_argument("transform count must be 1, 2, 4 or 8, got " +
                                  std::to_string(count));
  }
}

bool TransformSet::needs_square() const {
  for (const auto& t : transforms_)
    if (t.quarter_turns % 2 != 0) return true;
  return false;
}

int remap_label(int class_index, int rotation_index, int transforms, int classes) {
  if (transforms < 1) throw std::out_of_range("remap_label: transform count < 1");
  if (class_index < 0 || class_index >= classes)
    throw std::out_of_range("remap_label: class " + std::to_string(class_index) +
                            " outside [0, " + std::to_string(classes) + ")");
  if (rotation_index < 0 || rotation_index >= transforms)
    throw std::out_of_range("remap_label: transform " + std::to_string(rotation_index) +
                            " outside [0, " + std::to_string(transforms) + ")");
  return class_index * transforms + rotation_index;
}

ExpandedBatch expand_batch(const Tensor& images, std::span<const int> labels, int classes,
                           const TransformSet& ts) {
  if (images.rank() != 4) throw ShapeError("expand_batch: images must be (B, C, H, W)");
  const std::size_t batch = images.dim(0), channels = images.dim(1);
  const std::size_t height = images.dim(2), width = images.dim(3);
  if (labels.size() != batch)
    throw ShapeError("expand_batch: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(batch) + " images");
  if (ts.needs_square() && height != width)
    throw ShapeError("expand_batch: rotations need square images, got " +
                     std::to_string(height) + "x" + std::to_string(width));

  const int m = ts.size();
  ExpandedBatch out;
  out.transforms = m;
  out.classes = classes;
  out.labels.reserve(batch * m);
  for (std::size_t i = 0; i < batch; ++i)
    for (int r = 0; r < m; ++r) out.labels.push_back(remap_label(labels[i], r, m, classes));

  out.images = Tensor({batch * m, channels, height, width});
  kernels::parallel::expand_transforms(images.values(), batch, channels, height, width,
                                       ts.transforms(), out.images.values());
  return out;
}

LossAndGrad aggss_loss(const ExpandedBatch& batch, const Tensor& raw_logits) {
  const std::size_t rows = batch.labels.size();
  const std::size_t units = static_cast<std::size_t>(batch.classes) * batch.transforms;
  require_shape(raw_logits, {rows, units}, "aggss_loss logits");
  LossAndGrad out;
  out.grad = Tensor(raw_logits.shape());
  out.loss = kernels::parallel::softmax_cross_entropy(raw_logits.values(), rows, units,
                                                      batch.labels, out.grad.values());
  return out;
}

Tensor aggregate_inference(const Tensor& raw_logits, int transforms, bool mean) {
  if (raw_logits.rank() != 2) throw ShapeError("aggregate_inference: logits must be 2-D");
  if (transforms < 1) throw std::invalid_argument("aggregate_inference: transforms < 1");
  const auto m = static_cast<std::size_t>(transforms);
  if (raw_logits.dim(0) % m != 0)
    throw ShapeError("aggregate_inference: " + std::to_string(raw_logits.dim(0)) +
                     " rows not divisible by " + std::to_string(m));
  if (raw_logits.dim(1) % m != 0)
    throw ShapeError("aggregate_inference: " + std::to_string(raw_logits.dim(1)) +
                     " units not divisible by " + std::to_string(m));
  const std::size_t batch = raw_logits.dim(0) / m, classes = raw_logits.dim(1) / m;
  Tensor out({batch, classes});
  kernels::parallel::aggregate_strided(raw_logits.values(), batch, classes, m,
                                       mean ? 1.0f / static_cast<float>(m) : 1.0f,
                                       out.values());
  return out;
}

std::vector<int> argmax_rows(const Tensor& values) {
  std::vector<int> out(values.dim(0));
  for (std::size_t i = 0; i < values.dim(0); ++i) {
    const auto row = values.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

}  // namespace aggss
