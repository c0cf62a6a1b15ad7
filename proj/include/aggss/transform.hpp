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

// Aggregated self-supervision: rotation-expanded classes for training and
// per-rotation classifier aggregation for inference.
//
// Output units are laid out class-major: unit = class * M + transform. A
// bank of K classes therefore has K * M units, and the M copies of class c
// sit at c*M .. c*M + M - 1.

#include <span>
#include <vector>

#include "aggss/kernels.hpp"
#include "aggss/tensor.hpp"

namespace aggss {

/// Ordered set of M lossless image transforms. Entry 0 is always identity.
///
/// M = 1: identity. M = 2: 0 and 180 degrees. M = 4: 0/90/180/270 degrees.
/// M = 8: the four rotations, then the four rotations of the horizontally
/// flipped image.
class TransformSet {
 public:
  static TransformSet rotations(int count);

  int size() const { return static_cast<int>(transforms_.size()); }
  const kernels::PixelTransform& operator[](int r) const { return transforms_.at(r); }
  std::span<const kernels::PixelTransform> transforms() const { return transforms_; }
  /// True when some transform swaps height and width.
  bool needs_square() const;

 private:
  explicit TransformSet(std::vector<kernels::PixelTransform> t) : transforms_(std::move(t)) {}
  std::vector<kernels::PixelTransform> transforms_;
};

/// Interleaved expansion of a batch: the M variants of source item i are
/// rows i*M .. i*M + M - 1 and carry label `label * M + r`.
struct ExpandedBatch {
  Tensor images;            // (B*M, C, H, W)
  std::vector<int> labels;  // B*M entries in [0, K*M)
  int transforms = 1;
  int classes = 0;          // K

  std::size_t source_size() const { return labels.size() / static_cast<std::size_t>(transforms); }
};

/// `class_index * M + rotation_index`; throws std::out_of_range on bad input.
int remap_label(int class_index, int rotation_index, int transforms, int classes);

/// Rotation-expands `images` (B, C, H, W). Labels must lie in [0, classes).
ExpandedBatch expand_batch(const Tensor& images, std::span<const int> labels, int classes,
                           const TransformSet& ts);

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;  // d(loss)/d(raw logits), same shape as the logits
};

/// Mean over the B*M expanded rows of -log softmax(raw)[remapped label],
/// with the softmax taken over all K*M units.
LossAndGrad aggss_loss(const ExpandedBatch& batch, const Tensor& raw_logits);

/// Strided aggregation: values[b][c] = scale * sum_r raw[b*M + r][c*M + r].
/// `mean` selects scale = 1/M, otherwise 1.
Tensor aggregate_inference(const Tensor& raw_logits, int transforms, bool mean = true);

/// Row-wise argmax.
std::vector<int> argmax_rows(const Tensor& values);

}  // namespace aggss
