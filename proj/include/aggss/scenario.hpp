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

// Task streams for class-incremental learning: which classes arrive at each
// task, which training samples each task sees, and which of them are
// labelled. Builders only look at the training labels, so streams can be
// built and checked without loading any pixels.

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace aggss {

enum class ScenarioKind { traditional, longtail_ordered, longtail_shuffled, semi_supervised };

std::string to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(const std::string& name);

struct LabeledSample {
  std::size_t index = 0;  // into the dataset's train split
  int label = 0;
  bool operator==(const LabeledSample&) const = default;
};

struct TaskDataset {
  std::vector<int> classes;
  /// Ordered by position of the class in `classes`, then by sample index.
  std::vector<LabeledSample> labeled;
  std::vector<std::size_t> unlabeled;
  std::map<int, std::size_t> class_counts;  // labelled samples per class

  bool operator==(const TaskDataset&) const = default;
};

struct TaskStream {
  ScenarioKind kind = ScenarioKind::traditional;
  int total_classes = 0;
  std::uint64_t seed = 0;
  std::vector<int> class_order;              // seeded permutation of the class universe
  std::vector<std::size_t> declared_splits;  // class counts as configured, outlier split included
  std::vector<TaskDataset> tasks;
  std::vector<int> outlier_classes;          // never labelled
  std::vector<std::string> warnings;
  std::map<std::string, double> parameters;  // builder inputs, for provenance

  std::size_t num_tasks() const { return tasks.size(); }
  /// Classes per task, in task order.
  std::vector<std::size_t> task_sizes() const;
  /// Classes of tasks 0..t concatenated in task order.
  std::vector<int> classes_through(std::size_t t) const;
  /// slot[c] = position of class c in the concatenated task order, or -1.
  /// Model output units for class c live at slot[c] * M .. slot[c] * M + M - 1.
  std::vector<int> class_slots() const;

  bool operator==(const TaskStream&) const = default;
};

/// base classes first, then `increment` classes per task. base + k * increment
/// must equal num_classes; base == num_classes gives a single task.
TaskStream build_traditional(std::span<const int> labels, int num_classes, int base,
                             int increment, std::uint64_t seed);

struct LongTailOptions {
  double imbalance_ratio = 0.01;  // rho = n_min / n_max
  bool ordered = true;
  std::size_t max_per_class = 0;  // n_max; 0 uses the smallest class size
  std::size_t min_per_class = 5;  // clamp for counts that round below it
};

/// Per-class counts n_p = round(n_max * rho^(p / (C - 1))) over the class
/// order position p. Ordered mode keeps that profile along the task
/// sequence; shuffled mode permutes it across classes first.
TaskStream build_longtail(std::span<const int> labels, int num_classes, int base, int increment,
                          const LongTailOptions& options, std::uint64_t seed);

/// The exponential profile for `classes` positions, before clamping.
std::vector<std::size_t> longtail_profile(std::size_t classes, std::size_t max_per_class,
                                          double imbalance_ratio);

struct SemiSupervisedOptions {
  double label_fraction = 0.2;
  bool outlier_task = true;
  /// Relative share of the unlabelled pool drawn from the current tasks'
  /// unlabelled remainder, earlier tasks' remainder, and outlier classes.
  double weight_current = 1.0, weight_previous = 1.0, weight_outlier = 1.0;
};

/// `splits` lists class counts per task. With outlier_task the last split's
/// classes become outliers: they only ever appear in unlabelled pools.
TaskStream build_semisupervised(std::span<const int> labels, int num_classes,
                                std::span<const std::size_t> splits,
                                const SemiSupervisedOptions& options, std::uint64_t seed);

// Manifest: JSON document {format: "aggss-manifest", version: 1, kind, seed,
// total_classes, class_order, declared_splits, outlier_classes, warnings,
// parameters, tasks: [{classes, labeled: [[index, label]...], unlabeled,
// class_counts: [[class, count]...]}]}. Output is byte-stable for a given
// stream.
inline constexpr int kManifestVersion = 1;

std::string manifest_text(const TaskStream& stream);
TaskStream parse_manifest(const std::string& text);
void export_manifest(const TaskStream& stream, const std::filesystem::path& path);
TaskStream import_manifest(const std::filesystem::path& path);

}  // namespace aggss
