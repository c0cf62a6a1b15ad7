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

#include "aggss/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>

#include "aggss/optim.hpp"

namespace aggss {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] <= 0 || milestones[i] >= epochs) fail("milestones must lie in (0, epochs)");
    if (i > 0 && milestones[i] <= milestones[i - 1]) fail("milestones must be strictly increasing");
  }
  if (!(lr_decay > 0.0)) fail("lr_decay must be > 0");
  if (optimizer != "sgd") fail("optimizer must be 'sgd'");
  if (momentum < 0.0 || weight_decay < 0.0) fail("momentum and weight_decay must be >= 0");
  if (transforms != 1 && transforms != 2 && transforms != 4 && transforms != 8)
    fail("transforms must be 1, 2, 4 or 8");
  if (exemplar_selection != "herding" && exemplar_selection != "random")
    fail("exemplar_selection must be 'herding' or 'random'");
  if (grad_clip < 0.0) fail("grad_clip must be >= 0");
  if (eval_batch_size < 1) fail("eval_batch_size must be >= 1");
}

// ---- exemplars --------------------------------------------------------------

ExemplarBuffer::ExemplarBuffer(std::size_t budget, SelectionPolicy policy, std::uint64_t seed)
    : budget_(budget), policy_(policy), rng_(seed) {}

std::size_t ExemplarBuffer::size() const {
  std::size_t n = 0;
  for (const auto& [c, v] : store_) n += v.size();
  return n;
}

std::size_t ExemplarBuffer::quota(std::size_t classes_seen) const {
  return classes_seen == 0 ? 0 : budget_ / classes_seen;
}

std::vector<LabeledSample> ExemplarBuffer::samples() const {
  std::vector<LabeledSample> out;
  for (const auto& [c, v] : store_)
    for (auto idx : v) out.push_back({idx, c});
  return out;
}

void ExemplarBuffer::set_class(int cls, std::vector<std::size_t> selected) {
  store_[cls] = std::move(selected);
}

void ExemplarBuffer::shrink_to(std::size_t per_class) {
  for (auto& [c, v] : store_)
    if (v.size() > per_class) v.resize(per_class);
}

std::vector<std::size_t> herding_select(const Tensor& features, std::size_t count) {
  if (features.rank() != 2) throw ShapeError("herding_select: features must be (N, d)");
  const std::size_t n = features.dim(0), d = features.dim(1);
  count = std::min(count, n);
  std::vector<double> mean(d, 0.0), sum(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += features.at(i, j);
  for (auto& v : mean) v /= static_cast<double>(n);

  std::vector<bool> used(n, false);
  std::vector<std::size_t> order;
  for (std::size_t k = 1; k <= count; ++k) {
    std::size_t best = n;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = mean[j] - (sum[j] + features.at(i, j)) / static_cast<double>(k);
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = i;
      }
    }
    used[best] = true;
    order.push_back(best);
    for (std::size_t j = 0; j < d; ++j) sum[j] += features.at(best, j);
  }
  return order;
}

void update_exemplars(ExemplarBuffer& buffer, const TaskDataset& task, IncrementalModel& model,
                      const Dataset& ds, std::size_t batch_size) {
  if (buffer.budget() == 0) return;
  std::size_t classes_seen = buffer.store().size();
  for (int c : task.classes)
    if (!buffer.store().count(c)) ++classes_seen;
  if (buffer.budget() < classes_seen)
    throw ConfigError("exemplar budget " + std::to_string(buffer.budget()) + " cannot hold one sample for each of " +
                      std::to_string(classes_seen) + " classes");
  const std::size_t quota = buffer.quota(classes_seen);
  buffer.shrink_to(quota);

  for (int c : task.classes) {
    std::vector<std::size_t> pool;
    for (const auto& s : task.labeled)
      if (s.label == c) pool.push_back(s.index);
    if (pool.empty()) continue;
    std::vector<std::size_t> chosen;
    if (buffer.policy() == SelectionPolicy::random) {
      std::shuffle(pool.begin(), pool.end(), buffer.rng());
      pool.resize(std::min(pool.size(), quota));
      chosen = pool;
    } else {
      // L2-normalised features of the un-rotated images.
      const std::size_t d = model.backbone().feature_dim();
      Tensor feats({pool.size(), d});
      for (std::size_t start = 0; start < pool.size(); start += batch_size) {
        const std::size_t len = std::min(batch_size, pool.size() - start);
        const Tensor images = make_batch(ds, ds.train, std::span(pool).subspan(start, len));
        const Tensor f = model.backbone().forward(images, false);
        std::copy(f.data(), f.data() + f.size(), feats.data() + start * d);
      }
      for (std::size_t i = 0; i < pool.size(); ++i) {
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) norm += static_cast<double>(feats.at(i, j)) * feats.at(i, j);
        const float inv = norm > 0.0 ? static_cast<float>(1.0 / std::sqrt(norm)) : 0.0f;
        for (std::size_t j = 0; j < d; ++j) feats.at(i, j) *= inv;
      }
      for (auto row : herding_select(feats, quota)) chosen.push_back(pool[row]);
    }
    buffer.set_class(c, std::move(chosen));
  }
}

// ---- distillation -------------------------------------------------------------

LossAndGrad distillation_loss(const Tensor& student, const Tensor& teacher, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("distillation temperature must be > 0");
  require_shape(teacher, student.shape(), "distillation teacher logits");
  const std::size_t rows = student.dim(0), cols = student.dim(1);
  LossAndGrad out;
  out.grad = Tensor(student.shape());
  double total = 0.0;
  std::vector<double> ps(cols), pt(cols);
  auto softmax = [&](const float* z, std::vector<double>& p) {
    double mx = z[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, static_cast<double>(z[j]));
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += (p[j] = std::exp((z[j] - mx) / temperature));
    for (auto& v : p) v /= sum;
  };
  for (std::size_t i = 0; i < rows; ++i) {
    softmax(student.data() + i * cols, ps);
    softmax(teacher.data() + i * cols, pt);
    for (std::size_t j = 0; j < cols; ++j) {
      if (pt[j] > 0.0) total += pt[j] * (std::log(pt[j]) - std::log(std::max(ps[j], 1e-300)));
      out.grad[i * cols + j] = static_cast<float>(temperature * (ps[j] - pt[j]) / static_cast<double>(rows));
    }
  }
  out.loss = temperature * temperature * total / static_cast<double>(rows);
  return out;
}

namespace {

class DistillationPlugin final : public AugmentedLossPlugin {
 public:
  DistillationPlugin(double temperature, double weight)
      : AugmentedLossPlugin(weight), temperature_(temperature) {
    if (!(temperature > 0.0)) throw ConfigError("distillation temperature must be > 0");
  }
  std::string name() const override { return "distillation"; }

  PluginOutput compute(const PluginContext& ctx) override {
    PluginOutput out;
    if (!ctx.teacher || ctx.old_units == 0) return out;
    const Tensor teacher = ctx.teacher->forward(ctx.batch.images);
    if (teacher.dim(1) != ctx.old_units)
      throw ShapeError("teacher width " + std::to_string(teacher.dim(1)) + " != old units " +
                       std::to_string(ctx.old_units));
    const std::size_t rows = ctx.logits.dim(0), width = ctx.logits.dim(1);
    Tensor student_old({rows, ctx.old_units});
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(ctx.logits.data() + i * width, ctx.logits.data() + i * width + ctx.old_units,
                student_old.data() + i * ctx.old_units);
    const LossAndGrad kd = distillation_loss(student_old, teacher, temperature_);
    out.loss = kd.loss;
    out.grad_logits = Tensor(ctx.logits.shape());
    for (std::size_t i = 0; i < rows; ++i)
      std::copy(kd.grad.data() + i * ctx.old_units, kd.grad.data() + (i + 1) * ctx.old_units,
                out.grad_logits.data() + i * width);
    return out;
  }

 private:
  double temperature_;
};

}  // namespace

std::unique_ptr<AugmentedLossPlugin> distillation_plugin(double temperature, double weight) {
  if (weight < 0.0) throw ConfigError("plugin weight must be >= 0");
  return std::make_unique<DistillationPlugin>(temperature, weight);
}

// ---- training -----------------------------------------------------------------

std::vector<std::size_t> epoch_order(std::size_t task_size, std::size_t exemplar_count,
                                     std::mt19937_64& rng) {
  std::vector<std::size_t> order(task_size + exemplar_count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

TaskLog train_task(IncrementalModel& model, std::size_t task_index, const TaskStream& stream,
                   const Dataset& ds, const ExemplarBuffer& buffer, const TrainConfig& config,
                   std::span<AugmentedLossPlugin* const> plugins, const ModelSnapshot* teacher) {
  config.validate();
  if (task_index >= stream.num_tasks()) throw ConfigError("task index beyond the stream");
  if (config.transforms != model.transforms())
    throw ConfigError("train config uses M=" + std::to_string(config.transforms) +
                      " but the model was built with M=" + std::to_string(model.transforms()));
  const std::size_t seen = stream.classes_through(task_index).size();
  if (model.classes_seen() != seen)
    throw ConfigError("model covers " + std::to_string(model.classes_seen()) + " classes, task " +
                      std::to_string(task_index) + " needs " + std::to_string(seen));
  if (task_index > 0)
    for (const auto* p : plugins)
      if (p->needs_teacher() && !teacher)
        throw ConfigError("plugin '" + p->name() + "' needs a teacher snapshot for task " +
                          std::to_string(task_index));

  const TaskDataset& task = stream.tasks[task_index];
  const std::vector<LabeledSample> exemplars = buffer.samples();
  const auto slots = stream.class_slots();
  const int m = model.transforms();
  const TransformSet ts = TransformSet::rotations(m);
  const std::size_t old_units = (seen - task.classes.size()) * static_cast<std::size_t>(m);
  const ModelSnapshot* active_teacher = task_index > 0 ? teacher : nullptr;
  const std::size_t queries_before = active_teacher ? active_teacher->queries() : 0;

  std::seed_seq seq{config.seed, static_cast<std::uint64_t>(task_index), std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);
  // Flips would alias the flipped transform classes when M = 8.
  const Augmentation augmentation{4, m != 8};
  const Augmentation* aug = config.augment ? &augmentation : nullptr;

  Sgd optimizer(model.parameters(), config.momentum, config.weight_decay);
  TaskLog log;
  log.task = task_index;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EpochLog elog;
    elog.epoch = epoch;
    elog.learning_rate = multistep_lr(config.learning_rate, config.milestones, config.lr_decay, epoch);
    for (const auto* p : plugins) elog.loss_plugins[p->name()] = 0.0;

    const auto order = epoch_order(task.labeled.size(), exemplars.size(), rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      std::vector<std::size_t> idx(len);
      std::vector<int> labels(len);
      for (std::size_t i = 0; i < len; ++i) {
        const std::size_t o = order[start + i];
        const LabeledSample& s =
            o < task.labeled.size() ? task.labeled[o] : exemplars[o - task.labeled.size()];
        if (o >= task.labeled.size()) ++elog.exemplar_samples;
        idx[i] = s.index;
        labels[i] = slots.at(s.label);
      }
      const Tensor images = make_batch(ds, ds.train, idx, aug, &rng);
      const ExpandedBatch batch = expand_batch(images, labels, static_cast<int>(seen), ts);

      model.zero_grad();
      Tensor features;
      const Tensor logits = model.forward(batch.images, true, &features);
      LossAndGrad agg = aggss_loss(batch, logits);
      double total = agg.loss;
      Tensor grad_features;

      const PluginContext ctx{batch, logits, features, active_teacher, old_units};
      for (auto* p : plugins) {
        if (!active_teacher && p->needs_teacher()) continue;  // L_aug = 0 on task 0
        const PluginOutput po = p->compute(ctx);
        const double w = p->weight();
        total += w * po.loss;
        elog.loss_plugins[p->name()] += w * po.loss;
        if (!po.grad_logits.empty())
          for (std::size_t i = 0; i < agg.grad.size(); ++i)
            agg.grad[i] += static_cast<float>(w) * po.grad_logits[i];
        if (!po.grad_features.empty()) {
          if (grad_features.empty()) grad_features = Tensor(features.shape());
          for (std::size_t i = 0; i < grad_features.size(); ++i)
            grad_features[i] += static_cast<float>(w) * po.grad_features[i];
        }
      }
      model.backward(agg.grad, grad_features.empty() ? nullptr : &grad_features);
      if (config.grad_clip > 0.0) optimizer.clip_grad_norm(config.grad_clip);
      optimizer.step(elog.learning_rate);

      elog.loss_total += total;
      elog.loss_aggss += agg.loss;
      ++elog.batches;
      elog.samples += len;
    }
    if (elog.batches) {
      const double n = static_cast<double>(elog.batches);
      elog.loss_total /= n;
      elog.loss_aggss /= n;
      for (auto& [k, v] : elog.loss_plugins) v /= n;
    }
    log.epochs.push_back(std::move(elog));
  }
  log.teacher_queries = active_teacher ? active_teacher->queries() - queries_before : 0;
  return log;
}

nlohmann::json to_json(const TaskLog& log) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : log.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"learning_rate", e.learning_rate},
                      {"loss_total", e.loss_total},
                      {"loss_aggss", e.loss_aggss},
                      {"loss_plugins", e.loss_plugins},
                      {"batches", e.batches},
                      {"samples", e.samples},
                      {"exemplar_samples", e.exemplar_samples}});
  return {{"task", log.task}, {"teacher_queries", log.teacher_queries}, {"epochs", epochs}};
}

nlohmann::json metrics_json(const RunRecord& r) {
  nlohmann::json logs = nlohmann::json::array();
  for (const auto& l : r.logs) logs.push_back(to_json(l));
  std::vector<std::string> ckpts;
  for (const auto& p : r.checkpoints) ckpts.push_back(p.filename().string());
  nlohmann::json j{{"version", 1},
                   {"accuracy", r.accuracy.to_json()},
                   {"diagonal", r.accuracy.diagonal()},
                   {"buffer_sizes", r.buffer_sizes},
                   {"checkpoints", ckpts},
                   {"tasks", logs}};
  if (r.accuracy.rows() > 0) j["average_incremental_accuracy"] = r.average_incremental_accuracy;
  return j;
}

namespace {

void write_metrics(const fs::path& dir, const RunRecord& record, const std::string& status,
                   const std::string& error = {}) {
  if (dir.empty()) return;
  fs::create_directories(dir);
  nlohmann::json j = metrics_json(record);
  j["status"] = status;
  if (!error.empty()) j["error"] = error;
  std::ofstream os(dir / "metrics.json");
  os << j.dump(2) << "\n";
}

}  // namespace

RunRecord run_experiment(const TaskStream& stream, const Dataset& ds, const ModelSpec& model_spec,
                         const TrainConfig& config,
                         std::span<const std::unique_ptr<AugmentedLossPlugin>> plugins,
                         const RunOptions& options) {
  config.validate();
  if (stream.num_tasks() == 0) throw ConfigError("task stream is empty");
  if (model_spec.transforms != config.transforms)
    throw ConfigError("model and train config disagree on the transform count");

  std::vector<AugmentedLossPlugin*> active;
  for (const auto& p : plugins) active.push_back(p.get());

  RunRecord record;
  try {
    IncrementalModel model = build_model(model_spec, stream.tasks[0].classes.size());
    ExemplarBuffer buffer(config.exemplar_budget,
                          config.exemplar_selection == "random" ? SelectionPolicy::random
                                                                : SelectionPolicy::herding,
                          config.seed);
    std::unique_ptr<ModelSnapshot> teacher;
    for (std::size_t t = 0; t < stream.num_tasks(); ++t) {
      if (t > 0) model.grow(stream.tasks[t].classes.size());
      record.logs.push_back(train_task(model, t, stream, ds, buffer, config, active, teacher.get()));
      auto row = evaluate_seen(model, stream, ds, t, config.eval_batch_size);
      record.accuracy.add_row(row);
      record.average_incremental_accuracy = average_incremental_accuracy(record.accuracy);
      if (options.on_task) options.on_task(t, row);
      update_exemplars(buffer, stream.tasks[t], model, ds, config.eval_batch_size);
      record.buffer_sizes.push_back(buffer.size());
      record.buffer_contents.push_back(buffer.samples());
      teacher = std::make_unique<ModelSnapshot>(model);
      if (!options.output_dir.empty() && options.save_checkpoints) {
        const fs::path ck = options.output_dir / "checkpoints" / ("task_" + std::to_string(t) + ".ckpt");
        const auto order = stream.classes_through(t);
        std::vector<std::string> names;
        for (int c : order)
          names.push_back(static_cast<std::size_t>(c) < ds.class_names.size() ? ds.class_names[c]
                                                                              : std::to_string(c));
        save_checkpoint(ck, model, static_cast<int>(t),
                        {{"mean", ds.mean}, {"stddev", ds.stddev}, {"slot_classes", order},
                         {"slot_names", names}, {"image_size", ds.train.height}});
        record.checkpoints.push_back(ck);
      }
      write_metrics(options.output_dir, record,
                    t + 1 == stream.num_tasks() ? "complete" : "running");
    }
  } catch (const std::exception& e) {
    write_metrics(options.output_dir, record, "failed", e.what());
    throw;
  }
  return record;
}

}  // namespace aggss
