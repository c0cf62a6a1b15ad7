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

#include "aggss/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace aggss {

using nlohmann::json;

std::string to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::traditional: return "traditional";
    case ScenarioKind::longtail_ordered: return "longtail-ordered";
    case ScenarioKind::longtail_shuffled: return "longtail-shuffled";
    case ScenarioKind::semi_supervised: return "semi-supervised";
  }
  return "unknown";
}

ScenarioKind scenario_kind_from_string(const std::string& name) {
  for (auto k : {ScenarioKind::traditional, ScenarioKind::longtail_ordered,
                 ScenarioKind::longtail_shuffled, ScenarioKind::semi_supervised})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown scenario kind '" + name + "'");
}

std::vector<std::size_t> TaskStream::task_sizes() const {
  std::vector<std::size_t> out;
  for (const auto& t : tasks) out.push_back(t.classes.size());
  return out;
}

std::vector<int> TaskStream::classes_through(std::size_t t) const {
  std::vector<int> out;
  for (std::size_t i = 0; i <= t && i < tasks.size(); ++i)
    out.insert(out.end(), tasks[i].classes.begin(), tasks[i].classes.end());
  return out;
}

std::vector<int> TaskStream::class_slots() const {
  std::vector<int> slots(total_classes, -1);
  int next = 0;
  for (const auto& t : tasks)
    for (int c : t.classes) slots.at(c) = next++;
  return slots;
}

namespace {

std::vector<std::vector<std::size_t>> samples_by_class(std::span<const int> labels, int num_classes) {
  std::vector<std::vector<std::size_t>> by(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw std::invalid_argument("label " + std::to_string(labels[i]) + " outside the class universe");
    by[labels[i]].push_back(i);
  }
  return by;
}

std::vector<int> seeded_class_order(int num_classes, std::mt19937_64& rng) {
  std::vector<int> order(num_classes);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<std::size_t> split_sizes(int num_classes, int base, int increment) {
  if (num_classes < 1) throw std::invalid_argument("class universe is empty");
  if (base < 1 || base > num_classes)
    throw std::invalid_argument("base must be in [1, " + std::to_string(num_classes) + "]");
  std::vector<std::size_t> sizes{static_cast<std::size_t>(base)};
  if (base == num_classes) return sizes;
  if (increment < 1) throw std::invalid_argument("increment must be >= 1");
  if ((num_classes - base) % increment != 0)
    throw std::invalid_argument("base + k * increment must equal " + std::to_string(num_classes) +
                                " (base " + std::to_string(base) + ", increment " +
                                std::to_string(increment) + ")");
  for (int i = 0; i < (num_classes - base) / increment; ++i)
    sizes.push_back(static_cast<std::size_t>(increment));
  return sizes;
}

// Slices the class order into tasks and takes `take(class)` samples per class.
template <class Take>
std::vector<TaskDataset> slice_tasks(const std::vector<int>& order,
                                     const std::vector<std::size_t>& sizes,
                                     const std::vector<std::vector<std::size_t>>& by_class,
                                     Take&& take) {
  std::vector<TaskDataset> tasks;
  std::size_t pos = 0;
  for (std::size_t s : sizes) {
    TaskDataset t;
    for (std::size_t i = 0; i < s; ++i, ++pos) {
      const int c = order[pos];
      t.classes.push_back(c);
      std::vector<std::size_t> chosen = take(c, pos, by_class[c]);
      std::sort(chosen.begin(), chosen.end());
      for (auto idx : chosen) t.labeled.push_back({idx, c});
      t.class_counts[c] = chosen.size();
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

}  // namespace

TaskStream build_traditional(std::span<const int> labels, int num_classes, int base,
                             int increment, std::uint64_t seed) {
  const auto sizes = split_sizes(num_classes, base, increment);
  const auto by_class = samples_by_class(labels, num_classes);
  std::mt19937_64 rng(seed);
  TaskStream s;
  s.kind = ScenarioKind::traditional;
  s.total_classes = num_classes;
  s.seed = seed;
  s.class_order = seeded_class_order(num_classes, rng);
  s.declared_splits = sizes;
  s.parameters = {{"base", static_cast<double>(base)}, {"increment", static_cast<double>(increment)}};
  s.tasks = slice_tasks(s.class_order, sizes, by_class,
                        [](int, std::size_t, const std::vector<std::size_t>& all) { return all; });
  return s;
}

std::vector<std::size_t> longtail_profile(std::size_t classes, std::size_t max_per_class,
                                          double imbalance_ratio) {
  std::vector<std::size_t> out(classes);
  for (std::size_t p = 0; p < classes; ++p) {
    const double exponent = classes > 1 ? static_cast<double>(p) / static_cast<double>(classes - 1) : 0.0;
    out[p] = static_cast<std::size_t>(
        std::llround(static_cast<double>(max_per_class) * std::pow(imbalance_ratio, exponent)));
  }
  return out;
}

TaskStream build_longtail(std::span<const int> labels, int num_classes, int base, int increment,
                          const LongTailOptions& options, std::uint64_t seed) {
  if (!(options.imbalance_ratio > 0.0 && options.imbalance_ratio <= 1.0))
    throw std::invalid_argument("imbalance_ratio must lie in (0, 1]");
  const auto sizes = split_sizes(num_classes, base, increment);
  const auto by_class = samples_by_class(labels, num_classes);
  std::size_t n_max = options.max_per_class;
  if (n_max == 0) {
    n_max = by_class.front().size();
    for (const auto& v : by_class) n_max = std::min(n_max, v.size());
  }

  std::mt19937_64 rng(seed);
  TaskStream s;
  s.kind = options.ordered ? ScenarioKind::longtail_ordered : ScenarioKind::longtail_shuffled;
  s.total_classes = num_classes;
  s.seed = seed;
  s.class_order = seeded_class_order(num_classes, rng);
  s.declared_splits = sizes;
  s.parameters = {{"base", static_cast<double>(base)},
                  {"increment", static_cast<double>(increment)},
                  {"imbalance_ratio", options.imbalance_ratio},
                  {"max_per_class", static_cast<double>(n_max)},
                  {"min_per_class", static_cast<double>(options.min_per_class)}};

  std::vector<std::size_t> profile = longtail_profile(num_classes, n_max, options.imbalance_ratio);
  for (std::size_t p = 0; p < profile.size(); ++p)
    if (profile[p] < options.min_per_class) {
      s.warnings.push_back("class position " + std::to_string(p) + ": count " +
                           std::to_string(profile[p]) + " clamped to " +
                           std::to_string(options.min_per_class));
      profile[p] = options.min_per_class;
    }
  if (!options.ordered) std::shuffle(profile.begin(), profile.end(), rng);

  s.tasks = slice_tasks(s.class_order, sizes, by_class,
                        [&](int, std::size_t pos, const std::vector<std::size_t>& all) {
                          std::vector<std::size_t> pool = all;
                          std::shuffle(pool.begin(), pool.end(), rng);
                          pool.resize(std::min(pool.size(), profile[pos]));
                          return pool;
                        });
  return s;
}

TaskStream build_semisupervised(std::span<const int> labels, int num_classes,
                                std::span<const std::size_t> splits,
                                const SemiSupervisedOptions& options, std::uint64_t seed) {
  if (!(options.label_fraction > 0.0 && options.label_fraction <= 1.0))
    throw std::invalid_argument("label_fraction must lie in (0, 1]");
  if (splits.empty()) throw std::invalid_argument("splits must not be empty");
  if (options.outlier_task && splits.size() < 2)
    throw std::invalid_argument("an outlier split needs at least one learnable split before it");
  const std::size_t total = std::accumulate(splits.begin(), splits.end(), std::size_t{0});
  if (total > static_cast<std::size_t>(num_classes))
    throw std::invalid_argument("splits sum to " + std::to_string(total) + " > " +
                                std::to_string(num_classes) + " classes");
  for (auto s : splits)
    if (s == 0) throw std::invalid_argument("splits must be positive");
  for (double w : {options.weight_current, options.weight_previous, options.weight_outlier})
    if (w < 0.0) throw std::invalid_argument("mixing weights must be non-negative");

  const auto by_class = samples_by_class(labels, num_classes);
  std::mt19937_64 rng(seed);
  TaskStream s;
  s.kind = ScenarioKind::semi_supervised;
  s.total_classes = num_classes;
  s.seed = seed;
  s.class_order = seeded_class_order(num_classes, rng);
  s.declared_splits.assign(splits.begin(), splits.end());
  s.parameters = {{"label_fraction", options.label_fraction},
                  {"outlier_task", options.outlier_task ? 1.0 : 0.0},
                  {"weight_current", options.weight_current},
                  {"weight_previous", options.weight_previous},
                  {"weight_outlier", options.weight_outlier}};

  const std::size_t learnable = options.outlier_task ? splits.size() - 1 : splits.size();
  std::vector<std::size_t> outlier_pool;
  {
    std::size_t pos = std::accumulate(splits.begin(), splits.begin() + learnable, std::size_t{0});
    if (options.outlier_task)
      for (std::size_t i = 0; i < splits.back(); ++i, ++pos) {
        const int c = s.class_order[pos];
        s.outlier_classes.push_back(c);
        outlier_pool.insert(outlier_pool.end(), by_class[c].begin(), by_class[c].end());
      }
    std::shuffle(outlier_pool.begin(), outlier_pool.end(), rng);
  }

  std::vector<std::size_t> previous_pool;  // unused unlabelled remainder of earlier tasks
  std::size_t pos = 0;
  for (std::size_t t = 0; t < learnable; ++t) {
    TaskDataset task;
    std::vector<std::size_t> remainder;
    for (std::size_t i = 0; i < splits[t]; ++i, ++pos) {
      const int c = s.class_order[pos];
      task.classes.push_back(c);
      std::vector<std::size_t> pool = by_class[c];
      std::shuffle(pool.begin(), pool.end(), rng);
      const auto n_labeled = static_cast<std::size_t>(
          std::floor(options.label_fraction * static_cast<double>(pool.size()) + 1e-9));
      if (n_labeled == 0)
        throw std::invalid_argument("label_fraction leaves class " + std::to_string(c) +
                                    " without labelled samples");
      std::vector<std::size_t> chosen(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_labeled));
      std::sort(chosen.begin(), chosen.end());
      for (auto idx : chosen) task.labeled.push_back({idx, c});
      task.class_counts[c] = chosen.size();
      remainder.insert(remainder.end(), pool.begin() + static_cast<std::ptrdiff_t>(n_labeled), pool.end());
    }
    std::shuffle(remainder.begin(), remainder.end(), rng);

    // Pool size follows the current remainder; sources share it by weight.
    const std::size_t target = remainder.size();
    const bool has_prev = !previous_pool.empty(), has_out = !outlier_pool.empty();
    const double wsum = options.weight_current + (has_prev ? options.weight_previous : 0.0) +
                        (has_out ? options.weight_outlier : 0.0);
    auto share = [&](double w, std::size_t avail) -> std::size_t {
      if (wsum <= 0.0) return 0;
      return std::min(avail, static_cast<std::size_t>(std::llround(static_cast<double>(target) * w / wsum)));
    };
    const std::size_t n_cur = share(options.weight_current, remainder.size());
    const std::size_t n_prev = has_prev ? share(options.weight_previous, previous_pool.size()) : 0;
    const std::size_t n_out = has_out ? share(options.weight_outlier, outlier_pool.size()) : 0;

    auto take_back = [](std::vector<std::size_t>& from, std::size_t n, std::vector<std::size_t>& to) {
      to.insert(to.end(), from.end() - static_cast<std::ptrdiff_t>(n), from.end());
      from.resize(from.size() - n);
    };
    take_back(previous_pool, n_prev, task.unlabeled);
    take_back(outlier_pool, n_out, task.unlabeled);
    task.unlabeled.insert(task.unlabeled.end(), remainder.begin(),
                          remainder.begin() + static_cast<std::ptrdiff_t>(n_cur));
    previous_pool.insert(previous_pool.begin(), remainder.begin() + static_cast<std::ptrdiff_t>(n_cur),
                         remainder.end());
    std::sort(task.unlabeled.begin(), task.unlabeled.end());
    s.tasks.push_back(std::move(task));
  }
  return s;
}

// ---- manifests --------------------------------------------------------------

std::string manifest_text(const TaskStream& s) {
  json tasks = json::array();
  for (const auto& t : s.tasks) {
    json labeled = json::array();
    for (const auto& l : t.labeled) labeled.push_back({l.index, l.label});
    json counts = json::array();
    for (const auto& [c, n] : t.class_counts) counts.push_back({c, n});
    tasks.push_back({{"classes", t.classes},
                     {"labeled", labeled},
                     {"unlabeled", t.unlabeled},
                     {"class_counts", counts}});
  }
  const json doc{{"format", "aggss-manifest"},
                 {"version", kManifestVersion},
                 {"kind", to_string(s.kind)},
                 {"seed", s.seed},
                 {"total_classes", s.total_classes},
                 {"class_order", s.class_order},
                 {"declared_splits", s.declared_splits},
                 {"outlier_classes", s.outlier_classes},
                 {"warnings", s.warnings},
                 {"parameters", s.parameters},
                 {"tasks", tasks}};
  return doc.dump(1) + "\n";
}

TaskStream parse_manifest(const std::string& text) {
  const json doc = json::parse(text);
  if (doc.at("format") != "aggss-manifest") throw std::invalid_argument("not an aggss manifest");
  if (doc.at("version").get<int>() != kManifestVersion)
    throw std::invalid_argument("unsupported manifest version " + doc.at("version").dump());
  TaskStream s;
  s.kind = scenario_kind_from_string(doc.at("kind").get<std::string>());
  s.seed = doc.at("seed").get<std::uint64_t>();
  s.total_classes = doc.at("total_classes").get<int>();
  s.class_order = doc.at("class_order").get<std::vector<int>>();
  s.declared_splits = doc.at("declared_splits").get<std::vector<std::size_t>>();
  s.outlier_classes = doc.at("outlier_classes").get<std::vector<int>>();
  s.warnings = doc.at("warnings").get<std::vector<std::string>>();
  s.parameters = doc.at("parameters").get<std::map<std::string, double>>();
  for (const auto& jt : doc.at("tasks")) {
    TaskDataset t;
    t.classes = jt.at("classes").get<std::vector<int>>();
    for (const auto& l : jt.at("labeled")) t.labeled.push_back({l.at(0).get<std::size_t>(), l.at(1).get<int>()});
    t.unlabeled = jt.at("unlabeled").get<std::vector<std::size_t>>();
    for (const auto& c : jt.at("class_counts")) t.class_counts[c.at(0).get<int>()] = c.at(1).get<std::size_t>();
    s.tasks.push_back(std::move(t));
  }
  return s;
}

void export_manifest(const TaskStream& stream, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write manifest " + path.string());
  os << manifest_text(stream);
  if (!os) throw std::runtime_error("failed writing manifest " + path.string());
}

TaskStream import_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read manifest " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_manifest(ss.str());
}

}  // namespace aggss
