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

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "aggss/dataset.hpp"
#include "aggss/model.hpp"
#include "aggss/scenario.hpp"
#include "aggss/tensor.hpp"

namespace aggss {

/// Lower-triangular acc[t][n] = accuracy (percent) on the test data of
/// tasks 0..n after learning task t, n <= t.
class AccuracyMatrix {
 public:
  /// Appends the row for the next task; it must have rows() + 1 entries.
  void add_row(std::vector<double> row);
  std::size_t rows() const { return rows_.size(); }
  double at(std::size_t t, std::size_t n) const;
  const std::vector<double>& row(std::size_t t) const { return rows_.at(t); }
  std::vector<double> diagonal() const;

  nlohmann::json to_json() const;
  static AccuracyMatrix from_json(const nlohmann::json& j);
  bool operator==(const AccuracyMatrix&) const = default;

 private:
  std::vector<std::vector<double>> rows_;
};

/// Mean of the diagonal acc[t][t] over the T + 1 checkpoints.
double average_incremental_accuracy(const AccuracyMatrix& matrix);

/// Aggregated-inference predictions (output slots) for the given samples.
std::vector<int> predict_slots(IncrementalModel& model, const Dataset& ds, const ImageSet& set,
                               std::span<const std::size_t> indices, std::size_t batch_size = 256);

/// Top-1 accuracy (percent) on the test samples whose classes are listed.
double accuracy_on_classes(IncrementalModel& model, const Dataset& ds, const TaskStream& stream,
                           std::span<const int> classes, std::size_t batch_size = 256);

/// Row t of the accuracy matrix: entry n covers the test sets of tasks 0..n,
/// predictions range over every class seen through t.
std::vector<double> evaluate_seen(IncrementalModel& model, const TaskStream& stream,
                                  const Dataset& ds, std::size_t t, std::size_t batch_size = 256);

struct AttentionMap {
  std::string stage;
  std::vector<Tensor> maps;     // one (h, w) map per transform, values in [0, 1]
  std::vector<int> predicted;   // per-transform argmax over that transform's units
  std::vector<int> targets;     // class slot explained in each map
  int aggregated_prediction = -1;
};

/// Grad-CAM over every transform of `image` (1, C, H, W), normalised.
/// `target_slot` empty explains each transform's own prediction. `stage`
/// empty picks the last convolutional stage.
AttentionMap gradcam(IncrementalModel& model, const Tensor& image,
                     std::optional<int> target_slot = std::nullopt, const std::string& stage = {});

/// ReLU(sum_k weights[k] * activations[k]) scaled to max 1, or all zero.
/// activations is (K, h, w), weights has K entries.
Tensor weighted_activation_map(const Tensor& activations, std::span<const float> weights);

struct AblationRow {
  int transforms = 1;
  double accuracy = 0.0;
};

/// Trains one non-incremental model per M with the same seed and config
/// and reports aggregated-inference test accuracy.
struct TrainConfig;
std::vector<AblationRow> rotation_ablation(const Dataset& ds, const ModelSpec& base_spec,
                                           std::span<const int> transform_counts,
                                           const TrainConfig& config);

}  // namespace aggss
