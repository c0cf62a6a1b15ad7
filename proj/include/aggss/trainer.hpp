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

// Incremental training loop: task 0 minimises the AggSS loss alone, later
// tasks add weighted augmented losses from plugins, sample minibatches from
// the task data plus the exemplar buffer, and grow the classifier bank.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "aggss/dataset.hpp"
#include "aggss/errors.hpp"
#include "aggss/eval.hpp"
#include "aggss/model.hpp"
#include "aggss/scenario.hpp"
#include "aggss/transform.hpp"

namespace aggss {

struct TrainConfig {
  int epochs = 20;
  std::size_t batch_size = 128;
  double learning_rate = 0.1;
  std::vector<int> milestones{10, 15};
  double lr_decay = 0.1;
  std::string optimizer = "sgd";
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int transforms = 4;
  std::size_t exemplar_budget = 2000;
  std::string exemplar_selection = "herding";  // herding | random
  bool augment = true;
  double grad_clip = 0.0;  // 0 disables clipping
  std::size_t eval_batch_size = 256;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

// ---- exemplars --------------------------------------------------------------

enum class SelectionPolicy { herding, random };

/// Bounded store of old-class training samples, kept per class in selection
/// order so shrinking a class keeps its best-ranked samples.
class ExemplarBuffer {
 public:
  ExemplarBuffer(std::size_t budget, SelectionPolicy policy, std::uint64_t seed = 0);

  std::size_t budget() const { return budget_; }
  SelectionPolicy policy() const { return policy_; }
  std::size_t size() const;
  const std::map<int, std::vector<std::size_t>>& store() const { return store_; }
  /// floor(budget / classes_seen).
  std::size_t quota(std::size_t classes_seen) const;
  std::vector<LabeledSample> samples() const;

  /// Shrinks every stored class to `quota` and stores `selected` for `cls`.
  void set_class(int cls, std::vector<std::size_t> selected);
  void shrink_to(std::size_t per_class);
  std::mt19937_64& rng() { return rng_; }

 private:
  std::size_t budget_;
  SelectionPolicy policy_;
  std::map<int, std::vector<std::size_t>> store_;
  std::mt19937_64 rng_;
};

/// Greedy herding over the rows of `features` (N, d): step k picks the
/// unused row minimising || mean - (sum of chosen + candidate) / k ||.
/// Returns `count` row indices in selection order.
std::vector<std::size_t> herding_select(const Tensor& features, std::size_t count);

/// Re-allocates quotas over all seen classes (old ones plus `task`'s) and
/// selects exemplars for the task's classes using un-rotated features.
/// Throws ConfigError when the budget cannot hold one sample per class.
void update_exemplars(ExemplarBuffer& buffer, const TaskDataset& task, IncrementalModel& model,
                      const Dataset& ds, std::size_t batch_size = 256);

// ---- augmented losses -------------------------------------------------------

struct PluginContext {
  const ExpandedBatch& batch;
  const Tensor& logits;             // student raw logits (B*M, width)
  const Tensor& features;           // student features (B*M, d)
  const ModelSnapshot* teacher;     // null on task 0
  std::size_t old_units = 0;        // K_old * M
};

struct PluginOutput {
  double loss = 0.0;
  Tensor grad_logits;    // same shape as logits, or empty
  Tensor grad_features;  // same shape as features, or empty
};

/// An extra loss term L_aug. Implementations return zero without a teacher.
class AugmentedLossPlugin {
 public:
  explicit AugmentedLossPlugin(double weight) : weight_(weight) {}
  virtual ~AugmentedLossPlugin() = default;
  virtual std::string name() const = 0;
  virtual bool needs_teacher() const { return true; }
  /// Plugins that consume unlabelled pools (semi-supervised) say so here.
  virtual bool uses_unlabeled() const { return false; }
  virtual PluginOutput compute(const PluginContext& ctx) = 0;
  double weight() const { return weight_; }

 private:
  double weight_;
};

/// temperature^2 * KL(softmax(teacher / T) || softmax(student / T)),
/// averaged over rows. Returns the gradient w.r.t. the student logits.
LossAndGrad distillation_loss(const Tensor& student, const Tensor& teacher, double temperature);

/// Logit distillation over the old K_old * M units of the expanded batch.
std::unique_ptr<AugmentedLossPlugin> distillation_plugin(double temperature, double weight = 1.0);

// ---- training -----------------------------------------------------------------

struct EpochLog {
  int epoch = 0;
  double learning_rate = 0.0;
  double loss_total = 0.0;   // mean over minibatches
  double loss_aggss = 0.0;
  std::map<std::string, double> loss_plugins;  // weighted contributions
  std::size_t batches = 0;
  std::size_t samples = 0;
  std::size_t exemplar_samples = 0;
};

struct TaskLog {
  std::size_t task = 0;
  std::vector<EpochLog> epochs;
  std::size_t teacher_queries = 0;
};

nlohmann::json to_json(const TaskLog& log);

/// Epoch sample order over D(t) + E: a uniform shuffle of the union.
/// Entries >= task_size refer to exemplars.
std::vector<std::size_t> epoch_order(std::size_t task_size, std::size_t exemplar_count,
                                     std::mt19937_64& rng);

/// Trains `model` (already grown for task t) on task t of `stream`.
TaskLog train_task(IncrementalModel& model, std::size_t task_index, const TaskStream& stream,
                   const Dataset& ds, const ExemplarBuffer& buffer, const TrainConfig& config,
                   std::span<AugmentedLossPlugin* const> plugins, const ModelSnapshot* teacher);

struct RunRecord {
  AccuracyMatrix accuracy;
  std::vector<TaskLog> logs;
  std::vector<std::filesystem::path> checkpoints;
  std::vector<std::size_t> buffer_sizes;
  std::vector<std::vector<LabeledSample>> buffer_contents;  // after each task
  double average_incremental_accuracy = 0.0;
};

struct RunOptions {
  /// When set, metrics.json and per-task checkpoints are written here as the
  /// run progresses.
  std::filesystem::path output_dir;
  bool save_checkpoints = true;
  std::function<void(std::size_t task, const std::vector<double>& row)> on_task;
};

/// grow -> train_task -> evaluate_seen -> update_exemplars for every task.
RunRecord run_experiment(const TaskStream& stream, const Dataset& ds, const ModelSpec& model_spec,
                         const TrainConfig& config,
                         std::span<const std::unique_ptr<AugmentedLossPlugin>> plugins,
                         const RunOptions& options = {});

nlohmann::json metrics_json(const RunRecord& record);

}  // namespace aggss
