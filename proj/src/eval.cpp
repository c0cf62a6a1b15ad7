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

#include "aggss/eval.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "aggss/trainer.hpp"
#include "aggss/transform.hpp"

namespace aggss {

void AccuracyMatrix::add_row(std::vector<double> row) {
  if (row.size() != rows_.size() + 1)
    throw std::invalid_argument("accuracy row " + std::to_string(rows_.size()) + " needs " +
                                std::to_string(rows_.size() + 1) + " entries");
  for (double v : row)
    if (!(v >= 0.0 && v <= 100.0)) throw std::invalid_argument("accuracy outside [0, 100]");
  rows_.push_back(std::move(row));
}

double AccuracyMatrix::at(std::size_t t, std::size_t n) const {
  if (n > t) throw std::out_of_range("accuracy matrix is defined for n <= t only");
  return rows_.at(t).at(n);
}

std::vector<double> AccuracyMatrix::diagonal() const {
  std::vector<double> d;
  for (std::size_t t = 0; t < rows_.size(); ++t) d.push_back(rows_[t].at(t));
  return d;
}

nlohmann::json AccuracyMatrix::to_json() const { return rows_; }

AccuracyMatrix AccuracyMatrix::from_json(const nlohmann::json& j) {
  AccuracyMatrix m;
  for (const auto& row : j) m.add_row(row.get<std::vector<double>>());
  return m;
}

double average_incremental_accuracy(const AccuracyMatrix& matrix) {
  if (matrix.rows() == 0) throw std::invalid_argument("accuracy matrix has no checkpoints");
  double sum = 0.0;
  for (std::size_t t = 0; t < matrix.rows(); ++t) {
    if (matrix.row(t).size() <= t)
      throw std::invalid_argument("missing diagonal entry for task " + std::to_string(t));
    sum += matrix.at(t, t);
  }
  return sum / static_cast<double>(matrix.rows());
}

std::vector<int> predict_slots(IncrementalModel& model, const Dataset& ds, const ImageSet& set,
                               std::span<const std::size_t> indices, std::size_t batch_size) {
  const TransformSet ts = TransformSet::rotations(model.transforms());
  std::vector<int> out;
  out.reserve(indices.size());
  batch_size = std::max<std::size_t>(1, batch_size);
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const auto chunk = indices.subspan(start, std::min(batch_size, indices.size() - start));
    const Tensor images = make_batch(ds, set, chunk);
    const std::vector<int> dummy(chunk.size(), 0);
    const ExpandedBatch expanded = expand_batch(images, dummy, 1, ts);
    const Tensor raw = model.forward(expanded.images, false);
    const auto pred = argmax_rows(aggregate_inference(raw, model.transforms()));
    out.insert(out.end(), pred.begin(), pred.end());
  }
  return out;
}

double accuracy_on_classes(IncrementalModel& model, const Dataset& ds, const TaskStream& stream,
                           std::span<const int> classes, std::size_t batch_size) {
  std::vector<bool> wanted(stream.total_classes, false);
  for (int c : classes) wanted.at(c) = true;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.test.size(); ++i) {
    const int label = ds.test.labels[i];
    if (label >= 0 && label < stream.total_classes && wanted[label]) idx.push_back(i);
  }
  if (idx.empty()) throw std::invalid_argument("no test samples for the requested classes");
  const auto slots = stream.class_slots();
  const auto pred = predict_slots(model, ds, ds.test, idx, batch_size);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (pred[i] == slots[ds.test.labels[idx[i]]]) ++correct;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(idx.size());
}

std::vector<double> evaluate_seen(IncrementalModel& model, const TaskStream& stream,
                                  const Dataset& ds, std::size_t t, std::size_t batch_size) {
  if (t >= stream.num_tasks()) throw std::out_of_range("task index beyond the stream");
  if (model.classes_seen() != stream.classes_through(t).size())
    throw std::invalid_argument("model has not been grown through task " + std::to_string(t));
  std::vector<double> row;
  for (std::size_t n = 0; n <= t; ++n) {
    const auto classes = stream.classes_through(n);
    row.push_back(accuracy_on_classes(model, ds, stream, classes, batch_size));
  }
  return row;
}

Tensor weighted_activation_map(const Tensor& activations, std::span<const float> weights) {
  if (activations.rank() != 3 || activations.dim(0) != weights.size())
    throw ShapeError("weighted_activation_map: activations must be (K, h, w) with K weights");
  const std::size_t h = activations.dim(1), w = activations.dim(2);
  Tensor map({h, w});
  for (std::size_t k = 0; k < weights.size(); ++k)
    for (std::size_t i = 0; i < h * w; ++i) map[i] += weights[k] * activations[k * h * w + i];
  float mx = 0.0f;
  for (auto& v : map.values()) {
    v = std::max(v, 0.0f);
    mx = std::max(mx, v);
  }
  if (mx > 0.0f)
    for (auto& v : map.values()) v /= mx;
  return map;
}

AttentionMap gradcam(IncrementalModel& model, const Tensor& image, std::optional<int> target_slot,
                     const std::string& stage_name) {
  if (image.rank() != 4 || image.dim(0) != 1) throw ShapeError("gradcam expects one (1, C, H, W) image");
  AttentionMap out;
  out.stage = stage_name.empty() ? model.backbone().default_cam_stage() : stage_name;
  bool found = false;
  for (const auto& s : model.backbone().stages())
    if (s.name == out.stage) {
      if (!s.convolutional)
        throw std::invalid_argument("gradcam target '" + out.stage + "' is not convolutional");
      found = true;
    }
  if (!found) throw std::invalid_argument("backbone has no stage named '" + out.stage + "'");
  if (target_slot && (*target_slot < 0 || static_cast<std::size_t>(*target_slot) >= model.classes_seen()))
    throw std::out_of_range("gradcam target class outside the seen classes");

  const int m = model.transforms();
  const TransformSet ts = TransformSet::rotations(m);
  const int dummy = 0;
  const ExpandedBatch expanded = expand_batch(image, std::span<const int>(&dummy, 1), 1, ts);
  const std::size_t width = model.output_width();
  Tensor all_logits({static_cast<std::size_t>(m), width});

  for (int r = 0; r < m; ++r) {
    const auto rowspan = expanded.images.row(r);
    Tensor view({1, image.dim(1), image.dim(2), image.dim(3)},
                std::vector<float>(rowspan.begin(), rowspan.end()));
    Tensor activations;
    const Tensor logits = model.forward(view, false, nullptr, out.stage, &activations);
    std::copy(logits.data(), logits.data() + width, all_logits.data() + r * width);

    int best = 0;
    for (std::size_t c = 0; c < model.classes_seen(); ++c)
      if (logits[c * m + r] > logits[best * m + r]) best = static_cast<int>(c);
    out.predicted.push_back(best);
    const int target = target_slot.value_or(best);
    out.targets.push_back(target);

    Tensor grad({1, width});
    grad[static_cast<std::size_t>(target) * m + r] = 1.0f;
    const Tensor dact = model.backward_to_stage(grad, out.stage);
    const std::size_t k = activations.dim(1), plane = activations.dim(2) * activations.dim(3);
    std::vector<float> weights(k, 0.0f);
    for (std::size_t ch = 0; ch < k; ++ch) {
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += dact[ch * plane + i];
      weights[ch] = static_cast<float>(s / static_cast<double>(plane));
    }
    out.maps.push_back(weighted_activation_map(
        activations.reshaped({k, activations.dim(2), activations.dim(3)}), weights));
  }
  model.zero_grad();
  out.aggregated_prediction = argmax_rows(aggregate_inference(all_logits, m)).front();
  return out;
}

std::vector<AblationRow> rotation_ablation(const Dataset& ds, const ModelSpec& base_spec,
                                           std::span<const int> transform_counts,
                                           const TrainConfig& config) {
  std::vector<AblationRow> rows;
  const TaskStream stream =
      build_traditional(ds.train.labels, ds.num_classes, ds.num_classes, 1, config.seed);
  for (int m : transform_counts) {
    if (m != 1 && m != 2 && m != 4 && m != 8)
      throw ConfigError("ablation transform counts must be drawn from {1, 2, 4, 8}");
    ModelSpec spec = base_spec;
    spec.transforms = m;
    TrainConfig cfg = config;
    cfg.transforms = m;
    IncrementalModel model = build_model(spec, static_cast<std::size_t>(ds.num_classes));
    const ExemplarBuffer empty(0, SelectionPolicy::random, config.seed);
    train_task(model, 0, stream, ds, empty, cfg, {}, nullptr);
    const auto classes = stream.classes_through(0);
    rows.push_back({m, accuracy_on_classes(model, ds, stream, classes, cfg.eval_batch_size)});
  }
  return rows;
}

}  // namespace aggss
