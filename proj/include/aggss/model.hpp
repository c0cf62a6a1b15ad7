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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aggss/nn.hpp"
#include "aggss/tensor.hpp"

namespace aggss {

struct ModelSpec {
  std::string architecture = "small-conv";  // small-conv | resnet-32-like | resnet-18-like
  int transforms = 4;                       // M
  std::size_t in_channels = 3;
  std::size_t width = 0;                    // base channel width; 0 picks the default
  std::uint64_t seed = 0;
};

/// Names accepted by build_model.
const std::vector<std::string>& architectures();

/// Feature extractor made of named stages. Stages flagged convolutional
/// produce (N, C, H, W) maps and can serve as Grad-CAM targets.
class Backbone {
 public:
  struct Stage {
    std::string name;
    std::unique_ptr<nn::Layer> layer;
    bool convolutional = true;
  };

  Backbone() = default;
  Backbone(const Backbone& other);
  Backbone& operator=(const Backbone&) = delete;
  Backbone(Backbone&&) = default;
  Backbone& operator=(Backbone&&) = default;

  void add_stage(std::string name, std::unique_ptr<nn::Layer> layer, bool convolutional);

  /// Runs all stages. If `capture` names a stage its output is copied to
  /// `captured`.
  Tensor forward(const Tensor& x, bool training, const std::string& capture = {},
                 Tensor* captured = nullptr);
  Tensor backward(const Tensor& grad_features);
  /// Back-propagates from the features down to the output of `stage` and
  /// returns the gradient there. Earlier stages are not touched.
  Tensor backward_to(const Tensor& grad_features, const std::string& stage);

  std::size_t feature_dim() const { return feature_dim_; }
  void set_feature_dim(std::size_t d) { feature_dim_ = d; }
  const std::vector<Stage>& stages() const { return stages_; }
  /// Output of the last convolutional stage.
  std::string default_cam_stage() const;

  void collect_parameters(std::vector<nn::Parameter*>& out);
  void collect_buffers(std::vector<Tensor*>& out);

 private:
  std::size_t stage_index(const std::string& name) const;
  std::vector<Stage> stages_;
  std::size_t feature_dim_ = 0;
};

/// Backbone plus a growing bank of per-task classifier blocks. Block t maps
/// features to |C(t)| * M logits in class-major interleaved order; the
/// forward pass concatenates the blocks in task order.
class IncrementalModel {
 public:
  IncrementalModel(ModelSpec spec, std::size_t base_classes);
  IncrementalModel(const IncrementalModel&) = default;
  IncrementalModel& operator=(const IncrementalModel&) = delete;
  IncrementalModel(IncrementalModel&&) = default;

  /// Raw logits (N, output_width()). Optionally returns the features and
  /// the output of the backbone stage named `capture`.
  Tensor forward(const Tensor& images, bool training, Tensor* features = nullptr,
                 const std::string& capture = {}, Tensor* captured = nullptr);
  /// Back-propagates d(loss)/d(logits), plus an optional extra gradient on
  /// the features, into every parameter.
  void backward(const Tensor& grad_logits, const Tensor* grad_features = nullptr);
  /// Back-propagates one logit gradient through the heads and the backbone
  /// stages after `stage`; returns the gradient at that stage's output.
  Tensor backward_to_stage(const Tensor& grad_logits, const std::string& stage);

  /// Appends a classifier block of new_classes * M units.
  void grow(std::size_t new_classes);

  std::size_t output_width() const;
  std::size_t classes_seen() const;
  std::vector<std::size_t> block_widths() const;
  const std::vector<std::size_t>& task_classes() const { return task_classes_; }
  int transforms() const { return spec_.transforms; }
  const ModelSpec& spec() const { return spec_; }

  Backbone& backbone() { return backbone_; }
  const Backbone& backbone() const { return backbone_; }
  nn::Linear& head(std::size_t t) { return heads_.at(t); }

  std::vector<nn::Parameter*> parameters();
  std::vector<Tensor*> buffers();
  void zero_grad();

 private:
  ModelSpec spec_;
  std::mt19937_64 rng_;
  Backbone backbone_;
  std::vector<nn::Linear> heads_;
  std::vector<std::size_t> task_classes_;
};

/// Registry entry point. Throws std::invalid_argument for unknown names or
/// M outside {1, 2, 4, 8}.
IncrementalModel build_model(const ModelSpec& spec, std::size_t base_classes);

/// Frozen copy of a model, used as a distillation teacher. Inference is
/// serialised internally, so a snapshot may be shared between threads.
class ModelSnapshot {
 public:
  explicit ModelSnapshot(const IncrementalModel& model)
      : model_(std::make_unique<IncrementalModel>(model)) {}

  Tensor forward(const Tensor& images) const;
  std::size_t output_width() const { return model_->output_width(); }
  const IncrementalModel& model() const { return *model_; }
  /// Number of forward calls served so far.
  std::size_t queries() const { return queries_.load(); }

 private:
  std::unique_ptr<IncrementalModel> model_;
  mutable std::mutex mutex_;
  mutable std::atomic<std::size_t> queries_{0};
};

// Checkpoint container:
//   8 bytes  magic "AGGSSCKP"
//   u32      format version (1)
//   u64      metadata length L
//   L bytes  JSON metadata {architecture, transforms, in_channels, width,
//            seed, task_classes, task_index, extra, tensors: [{name, shape}]}
//   float32  tensor payloads, little endian, in metadata order
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  IncrementalModel model;
  int task_index = 0;
  /// Caller-defined metadata (input normalisation, slot to class mapping).
  nlohmann::json extra;
};

void save_checkpoint(const std::filesystem::path& path, IncrementalModel& model, int task_index,
                     const nlohmann::json& extra = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace aggss
