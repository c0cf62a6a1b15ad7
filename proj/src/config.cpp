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

#include "aggss/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace aggss {

namespace {

using nlohmann::json;

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(label() + "must be an object");
  }
  ~Section() = default;

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      check_type<T>(*it, key);
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(label() + key + ": " + e.what());
    }
  }

  void read(const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    read(key, s);
    out = s;
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  /// Rejects keys that no read() asked for.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where());
  }

  std::string sub(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  template <typename T>
  void check_type(const json& v, const char* key) const {
    bool ok = true;
    if constexpr (std::is_same_v<T, bool>) ok = v.is_boolean();
    else if constexpr (std::is_same_v<T, std::string>) ok = v.is_string();
    else if constexpr (std::is_floating_point_v<T>) ok = v.is_number();
    else if constexpr (std::is_unsigned_v<T>)
      ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
    else if constexpr (std::is_integral_v<T>) ok = v.is_number_integer();
    else ok = v.is_array();
    if (!ok) throw ConfigError(label() + key + ": unexpected type " + v.type_name());
  }
  std::string where() const { return path_.empty() ? "config root" : "section '" + path_ + "'"; }
  std::string label() const { return path_.empty() ? "" : path_ + "."; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void parse_dataset(Section s, DatasetSpec& d) {
  s.read("name", d.name);
  s.read("root", d.root);
  s.read("max_classes", d.max_classes);
  s.read("image_size", d.image_size);
  s.read("url", d.url);
  s.read("md5", d.md5);
  if (const json* syn = s.child("synthetic")) {
    Section t(*syn, s.sub("synthetic"));
    t.read("classes", d.synthetic.classes);
    t.read("train_per_class", d.synthetic.train_per_class);
    t.read("test_per_class", d.synthetic.test_per_class);
    t.read("image_size", d.synthetic.image_size);
    t.read("seed", d.synthetic.seed);
    t.finish();
  }
  s.finish();
  static const std::set<std::string> names{"cifar10", "cifar100", "image-folder", "synthetic"};
  if (!names.count(d.name)) throw ConfigError("dataset.name: unknown dataset '" + d.name + "'");
  if (d.name != "synthetic" && d.root.empty()) throw ConfigError("dataset.root is required for " + d.name);
}

void parse_scenario(Section s, ScenarioConfig& c) {
  s.read("kind", c.kind);
  s.read("base", c.base);
  s.read("increment", c.increment);
  s.read("imbalance_ratio", c.imbalance_ratio);
  s.read("max_per_class", c.max_per_class);
  s.read("min_per_class", c.min_per_class);
  s.read("splits", c.splits);
  s.read("label_fraction", c.label_fraction);
  s.read("outlier_task", c.outlier_task);
  s.read("weight_current", c.weight_current);
  s.read("weight_previous", c.weight_previous);
  s.read("weight_outlier", c.weight_outlier);
  s.read("manifest", c.manifest);
  s.finish();
  try {
    (void)scenario_kind_from_string(c.kind);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("scenario.kind: ") + e.what());
  }
}

void parse_model(Section s, ModelSpec& m) {
  s.read("architecture", m.architecture);
  s.read("in_channels", m.in_channels);
  s.read("width", m.width);
  s.finish();
  const auto& names = architectures();
  if (std::find(names.begin(), names.end(), m.architecture) == names.end())
    throw ConfigError("model.architecture: unknown architecture '" + m.architecture + "'");
}

void parse_train(Section s, TrainConfig& t) {
  s.read("epochs", t.epochs);
  s.read("batch_size", t.batch_size);
  s.read("learning_rate", t.learning_rate);
  s.read("milestones", t.milestones);
  s.read("lr_decay", t.lr_decay);
  s.read("optimizer", t.optimizer);
  s.read("momentum", t.momentum);
  s.read("weight_decay", t.weight_decay);
  s.read("transforms", t.transforms);
  s.read("exemplar_budget", t.exemplar_budget);
  s.read("exemplar_selection", t.exemplar_selection);
  s.read("augment", t.augment);
  s.read("grad_clip", t.grad_clip);
  s.read("eval_batch_size", t.eval_batch_size);
  s.finish();
}

void parse_plugin(Section s, PluginConfig& p) {
  s.read("kind", p.kind);
  s.read("weight", p.weight);
  s.read("temperature", p.temperature);
  s.finish();
  if (p.kind != "distillation") throw ConfigError("plugin kind '" + p.kind + "' is not available");
  if (p.weight < 0.0) throw ConfigError("plugin weight must be >= 0");
  if (!(p.temperature > 0.0)) throw ConfigError("plugin temperature must be > 0");
}

}  // namespace

void ExperimentConfig::resolve() {
  model.transforms = train.transforms;
  model.seed = seed;
  train.seed = seed;
  if (method.empty()) method = train.transforms > 1 ? "aggss" : "ce";
}

ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig c;
  Section root(j, "");
  root.read("name", c.name);
  root.read("method", c.method);
  root.read("seed", c.seed);
  root.read("output_dir", c.output_dir);
  if (const json* d = root.child("dataset")) parse_dataset(Section(*d, "dataset"), c.dataset);
  else parse_dataset(Section(json::object(), "dataset"), c.dataset);
  if (const json* s = root.child("scenario")) parse_scenario(Section(*s, "scenario"), c.scenario);
  if (const json* m = root.child("model")) parse_model(Section(*m, "model"), c.model);
  if (const json* t = root.child("train")) parse_train(Section(*t, "train"), c.train);
  if (const json* p = root.child("plugins")) {
    if (!p->is_array()) throw ConfigError("plugins must be an array");
    for (std::size_t i = 0; i < p->size(); ++i) {
      PluginConfig pc;
      parse_plugin(Section((*p)[i], "plugins[" + std::to_string(i) + "]"), pc);
      c.plugins.push_back(pc);
    }
  }
  root.finish();
  c.train.validate();
  c.resolve();
  return c;
}

void apply_env_overrides(ExperimentConfig& config) {
  if (const char* root = std::getenv(kDataRootEnv); root && *root) config.dataset.root = root;
  if (const char* out = std::getenv(kOutputDirEnv); out && *out) config.output_dir = out;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataMissing(path, "cannot open config file");
  json j;
  try {
    j = json::parse(is, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  ExperimentConfig c = parse_config(j);
  apply_env_overrides(c);
  return c;
}

nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  const auto& s = c.scenario;
  const auto& t = c.train;
  json plugins = json::array();
  for (const auto& p : c.plugins)
    plugins.push_back({{"kind", p.kind}, {"weight", p.weight}, {"temperature", p.temperature}});
  return {
      {"name", c.name},
      {"method", c.method},
      {"seed", c.seed},
      {"output_dir", c.output_dir.string()},
      {"dataset",
       {{"name", d.name},
        {"root", d.root.string()},
        {"max_classes", d.max_classes},
        {"image_size", d.image_size},
        {"url", d.url},
        {"md5", d.md5},
        {"synthetic",
         {{"classes", d.synthetic.classes},
          {"train_per_class", d.synthetic.train_per_class},
          {"test_per_class", d.synthetic.test_per_class},
          {"image_size", d.synthetic.image_size},
          {"seed", d.synthetic.seed}}}}},
      {"scenario",
       {{"kind", s.kind},
        {"base", s.base},
        {"increment", s.increment},
        {"imbalance_ratio", s.imbalance_ratio},
        {"max_per_class", s.max_per_class},
        {"min_per_class", s.min_per_class},
        {"splits", s.splits},
        {"label_fraction", s.label_fraction},
        {"outlier_task", s.outlier_task},
        {"weight_current", s.weight_current},
        {"weight_previous", s.weight_previous},
        {"weight_outlier", s.weight_outlier},
        {"manifest", s.manifest.string()}}},
      {"model",
       {{"architecture", c.model.architecture},
        {"in_channels", c.model.in_channels},
        {"width", c.model.width}}},
      {"train",
       {{"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"milestones", t.milestones},
        {"lr_decay", t.lr_decay},
        {"optimizer", t.optimizer},
        {"momentum", t.momentum},
        {"weight_decay", t.weight_decay},
        {"transforms", t.transforms},
        {"exemplar_budget", t.exemplar_budget},
        {"exemplar_selection", t.exemplar_selection},
        {"augment", t.augment},
        {"grad_clip", t.grad_clip},
        {"eval_batch_size", t.eval_batch_size}}},
      {"plugins", plugins}};
}

TaskStream build_stream(const ExperimentConfig& config, const Dataset& ds) {
  const auto& s = config.scenario;
  if (!s.manifest.empty()) {
    TaskStream stream = import_manifest(s.manifest);
    if (stream.total_classes != ds.num_classes)
      throw ConfigError("manifest " + s.manifest.string() + " covers " +
                        std::to_string(stream.total_classes) + " classes, dataset has " +
                        std::to_string(ds.num_classes));
    return stream;
  }
  const std::span<const int> labels(ds.train.labels);
  try {
    switch (scenario_kind_from_string(s.kind)) {
      case ScenarioKind::traditional:
        return build_traditional(labels, ds.num_classes, s.base, s.increment, config.seed);
      case ScenarioKind::longtail_ordered:
      case ScenarioKind::longtail_shuffled: {
        LongTailOptions o;
        o.imbalance_ratio = s.imbalance_ratio;
        o.ordered = scenario_kind_from_string(s.kind) == ScenarioKind::longtail_ordered;
        o.max_per_class = s.max_per_class;
        o.min_per_class = s.min_per_class;
        return build_longtail(labels, ds.num_classes, s.base, s.increment, o, config.seed);
      }
      case ScenarioKind::semi_supervised: {
        SemiSupervisedOptions o;
        o.label_fraction = s.label_fraction;
        o.outlier_task = s.outlier_task;
        o.weight_current = s.weight_current;
        o.weight_previous = s.weight_previous;
        o.weight_outlier = s.weight_outlier;
        return build_semisupervised(labels, ds.num_classes, s.splits, o, config.seed);
      }
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("scenario: ") + e.what());
  }
  throw ConfigError("scenario.kind: unhandled kind " + s.kind);
}

std::vector<std::unique_ptr<AugmentedLossPlugin>> make_plugins(const ExperimentConfig& config) {
  std::vector<std::unique_ptr<AugmentedLossPlugin>> out;
  for (const auto& p : config.plugins) out.push_back(distillation_plugin(p.temperature, p.weight));
  return out;
}

}  // namespace aggss
