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

// Experiment configuration: one JSON document (comments allowed) with the
// sections dataset, scenario, model, train and plugins. Parsing is strict:
// unknown keys and wrong types raise ConfigError. to_json() writes every
// field, defaults included, so a resolved config re-runs identically.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "aggss/dataset.hpp"
#include "aggss/errors.hpp"
#include "aggss/model.hpp"
#include "aggss/scenario.hpp"
#include "aggss/trainer.hpp"

namespace aggss {

struct ScenarioConfig {
  std::string kind = "traditional";  // traditional | longtail-ordered | longtail-shuffled | semi-supervised
  int base = 50;
  int increment = 10;
  double imbalance_ratio = 0.01;
  std::size_t max_per_class = 0;
  std::size_t min_per_class = 5;
  std::vector<std::size_t> splits;
  double label_fraction = 0.2;
  bool outlier_task = true;
  double weight_current = 1.0, weight_previous = 1.0, weight_outlier = 1.0;
  /// When set, the stream is imported from this manifest instead of built.
  std::filesystem::path manifest;
};

struct PluginConfig {
  std::string kind = "distillation";
  double weight = 1.0;
  double temperature = 2.0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  /// Label used by reports; empty resolves to "aggss" (M > 1) or "ce".
  std::string method;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/experiment";
  DatasetSpec dataset;
  ScenarioConfig scenario;
  ModelSpec model;
  TrainConfig train;
  std::vector<PluginConfig> plugins;

  /// Copies the top-level seed and M into the model and train sections.
  void resolve();
};

inline constexpr const char* kDataRootEnv = "AGGSS_DATA_ROOT";
inline constexpr const char* kOutputDirEnv = "AGGSS_OUTPUT_DIR";

ExperimentConfig parse_config(const nlohmann::json& j);
/// Reads, parses and applies environment overrides.
ExperimentConfig load_config(const std::filesystem::path& path);
void apply_env_overrides(ExperimentConfig& config);
nlohmann::json to_json(const ExperimentConfig& config);

/// Builds (or imports) the task stream over the dataset's training labels.
TaskStream build_stream(const ExperimentConfig& config, const Dataset& ds);
std::vector<std::unique_ptr<AugmentedLossPlugin>> make_plugins(const ExperimentConfig& config);

}  // namespace aggss
