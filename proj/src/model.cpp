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

#include "aggss/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace aggss {

using nn::BasicBlock;
using nn::BatchNorm2d;
using nn::Conv2d;
using nn::GlobalAvgPool;
using nn::MaxPool2d;
using nn::ReLU;
using nn::Sequential;

const std::vector<std::string>& architectures() {
  static const std::vector<std::string> names{"small-conv", "resnet-32-like", "resnet-18-like"};
  return names;
}

// ---- Backbone -------------------------------------------------------------

Backbone::Backbone(const Backbone& other) : feature_dim_(other.feature_dim_) {
  for (const auto& s : other.stages_)
    stages_.push_back({s.name, s.layer->clone(), s.convolutional});
}

void Backbone::add_stage(std::string name, std::unique_ptr<nn::Layer> layer, bool convolutional) {
  stages_.push_back({std::move(name), std::move(layer), convolutional});
}

std::size_t Backbone::stage_index(const std::string& name) const {
  for (std::size_t i = 0; i < stages_.size(); ++i)
    if (stages_[i].name == name) return i;
  throw std::invalid_argument("backbone has no stage named '" + name + "'");
}

Tensor Backbone::forward(const Tensor& x, bool training, const std::string& capture,
                         Tensor* captured) {
  Tensor h = x;
  for (auto& s : stages_) {
    h = s.layer->forward(h, training);
    if (captured && s.name == capture) *captured = h;
  }
  return h;
}

Tensor Backbone::backward(const Tensor& grad_features) {
  Tensor g = grad_features;
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it) g = it->layer->backward(g);
  return g;
}

Tensor Backbone::backward_to(const Tensor& grad_features, const std::string& stage) {
  const std::size_t stop = stage_index(stage);
  Tensor g = grad_features;
  for (std::size_t i = stages_.size(); i-- > stop + 1;) g = stages_[i].layer->backward(g);
  return g;
}

std::string Backbone::default_cam_stage() const {
  for (auto it = stages_.rbegin(); it != stages_.rend(); ++it)
    if (it->convolutional) return it->name;
  throw std::logic_error("backbone has no convolutional stage");
}

void Backbone::collect_parameters(std::vector<nn::Parameter*>& out) {
  for (auto& s : stages_) s.layer->collect_parameters(out);
}

void Backbone::collect_buffers(std::vector<Tensor*>& out) {
  for (auto& s : stages_) s.layer->collect_buffers(out);
}

namespace {

std::unique_ptr<Sequential> conv_bn_relu(std::size_t in, std::size_t out, std::mt19937_64& rng,
                                         bool pool) {
  auto seq = std::make_unique<Sequential>();
  seq->add(std::make_unique<Conv2d>(in, out, 3, 1, 1, false, rng))
      .add(std::make_unique<BatchNorm2d>(out))
      .add(std::make_unique<ReLU>());
  if (pool) seq->add(std::make_unique<MaxPool2d>());
  return seq;
}

std::unique_ptr<Sequential> residual_stage(std::size_t in, std::size_t out, std::size_t blocks,
                                           std::size_t stride, std::mt19937_64& rng) {
  auto seq = std::make_unique<Sequential>();
  for (std::size_t b = 0; b < blocks; ++b)
    seq->add(std::make_unique<BasicBlock>(b == 0 ? in : out, out, b == 0 ? stride : 1, rng));
  return seq;
}

Backbone make_backbone(const ModelSpec& spec, std::mt19937_64& rng) {
  Backbone bb;
  const std::size_t c = spec.in_channels;
  if (spec.architecture == "small-conv") {
    const std::size_t w = spec.width ? spec.width : 32;
    bb.add_stage("stem", conv_bn_relu(c, w, rng, false), true);
    bb.add_stage("stage1", conv_bn_relu(w, w, rng, true), true);
    bb.add_stage("stage2", conv_bn_relu(w, 2 * w, rng, true), true);
    bb.add_stage("stage3", conv_bn_relu(2 * w, 4 * w, rng, false), true);
    bb.set_feature_dim(4 * w);
  } else if (spec.architecture == "resnet-32-like") {
    // 6n + 2 layers with n = 5.
    const std::size_t w = spec.width ? spec.width : 16;
    bb.add_stage("stem", conv_bn_relu(c, w, rng, false), true);
    bb.add_stage("stage1", residual_stage(w, w, 5, 1, rng), true);
    bb.add_stage("stage2", residual_stage(w, 2 * w, 5, 2, rng), true);
    bb.add_stage("stage3", residual_stage(2 * w, 4 * w, 5, 2, rng), true);
    bb.set_feature_dim(4 * w);
  } else if (spec.architecture == "resnet-18-like") {
    const std::size_t w = spec.width ? spec.width : 64;
    bb.add_stage("stem", conv_bn_relu(c, w, rng, false), true);
    bb.add_stage("stage1", residual_stage(w, w, 2, 1, rng), true);
    bb.add_stage("stage2", residual_stage(w, 2 * w, 2, 2, rng), true);
    bb.add_stage("stage3", residual_stage(2 * w, 4 * w, 2, 2, rng), true);
    bb.add_stage("stage4", residual_stage(4 * w, 8 * w, 2, 2, rng), true);
    bb.set_feature_dim(8 * w);
  } else {
    throw std::invalid_argument("unknown architecture '" + spec.architecture + "'");
  }
  bb.add_stage("pool", std::make_unique<GlobalAvgPool>(), false);
  return bb;
}

void check_spec(const ModelSpec& spec) {
  if (spec.transforms != 1 && spec.transforms != 2 && spec.transforms != 4 &&
      spec.transforms != 8)
    throw std::invalid_argument("transform count must be 1, 2, 4 or 8");
  if (spec.in_channels == 0) throw std::invalid_argument("in_channels must be positive");
}

}  // namespace

// ---- IncrementalModel -----------------------------------------------------

IncrementalModel::IncrementalModel(ModelSpec spec, std::size_t base_classes)
    : spec_(std::move(spec)), rng_(spec_.seed) {
  check_spec(spec_);
  if (base_classes == 0) throw std::invalid_argument("base_classes must be >= 1");
  backbone_ = make_backbone(spec_, rng_);
  grow(base_classes);
}

IncrementalModel build_model(const ModelSpec& spec, std::size_t base_classes) {
  return IncrementalModel(spec, base_classes);
}

void IncrementalModel::grow(std::size_t new_classes) {
  if (new_classes == 0) throw std::invalid_argument("grow: new_classes must be >= 1");
  heads_.emplace_back(backbone_.feature_dim(), new_classes * spec_.transforms, rng_);
  task_classes_.push_back(new_classes);
}

std::size_t IncrementalModel::output_width() const {
  return classes_seen() * static_cast<std::size_t>(spec_.transforms);
}

std::size_t IncrementalModel::classes_seen() const {
  std::size_t n = 0;
  for (auto c : task_classes_) n += c;
  return n;
}

std::vector<std::size_t> IncrementalModel::block_widths() const {
  std::vector<std::size_t> w;
  for (const auto& h : heads_) w.push_back(h.out_features());
  return w;
}

Tensor IncrementalModel::forward(const Tensor& images, bool training, Tensor* features,
                                 const std::string& capture, Tensor* captured) {
  const Tensor feats = backbone_.forward(images, training, capture, captured);
  const std::size_t n = feats.dim(0), width = output_width();
  Tensor out({n, width});
  std::size_t offset = 0;
  for (auto& h : heads_) {
    const Tensor block = h.forward(feats, training);
    const std::size_t bw = h.out_features();
    for (std::size_t i = 0; i < n; ++i)
      std::copy(block.data() + i * bw, block.data() + (i + 1) * bw, out.data() + i * width + offset);
    offset += bw;
  }
  if (features) *features = feats;
  return out;
}

namespace {

Tensor heads_backward(std::vector<nn::Linear>& heads, const Tensor& grad_logits,
                      std::size_t feature_dim) {
  const std::size_t n = grad_logits.dim(0), width = grad_logits.dim(1);
  Tensor grad_feats({n, feature_dim});
  std::size_t offset = 0;
  for (auto& h : heads) {
    const std::size_t bw = h.out_features();
    Tensor block({n, bw});
    for (std::size_t i = 0; i < n; ++i)
      std::copy(grad_logits.data() + i * width + offset,
                grad_logits.data() + i * width + offset + bw, block.data() + i * bw);
    const Tensor g = h.backward(block);
    for (std::size_t i = 0; i < g.size(); ++i) grad_feats[i] += g[i];
    offset += bw;
  }
  return grad_feats;
}

}  // namespace

void IncrementalModel::backward(const Tensor& grad_logits, const Tensor* grad_features) {
  if (grad_logits.rank() != 2 || grad_logits.dim(1) != output_width())
    throw ShapeError("model backward: gradient shape " + shape_string(grad_logits.shape()));
  Tensor gf = heads_backward(heads_, grad_logits, backbone_.feature_dim());
  if (grad_features) {
    require_shape(*grad_features, gf.shape(), "feature gradient");
    for (std::size_t i = 0; i < gf.size(); ++i) gf[i] += (*grad_features)[i];
  }
  backbone_.backward(gf);
}

Tensor IncrementalModel::backward_to_stage(const Tensor& grad_logits, const std::string& stage) {
  const Tensor gf = heads_backward(heads_, grad_logits, backbone_.feature_dim());
  return backbone_.backward_to(gf, stage);
}

std::vector<nn::Parameter*> IncrementalModel::parameters() {
  std::vector<nn::Parameter*> out;
  backbone_.collect_parameters(out);
  for (auto& h : heads_) h.collect_parameters(out);
  return out;
}

std::vector<Tensor*> IncrementalModel::buffers() {
  std::vector<Tensor*> out;
  backbone_.collect_buffers(out);
  return out;
}

void IncrementalModel::zero_grad() {
  for (auto* p : parameters()) p->grad.fill(0.0f);
}

Tensor ModelSnapshot::forward(const Tensor& images) const {
  std::lock_guard lock(mutex_);
  ++queries_;
  return model_->forward(images, false);
}

// ---- Checkpoints ----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'A', 'G', 'G', 'S', 'S', 'C', 'K', 'P'};

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in native (little-endian) order");

std::vector<std::pair<std::string, Tensor*>> named_state(IncrementalModel& model) {
  std::vector<std::pair<std::string, Tensor*>> out;
  std::size_t i = 0;
  for (auto* p : model.parameters()) out.emplace_back("param" + std::to_string(i++) + "." + p->name, &p->value);
  i = 0;
  for (auto* b : model.buffers()) out.emplace_back("buffer" + std::to_string(i++), b);
  return out;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, IncrementalModel& model, int task_index,
                     const nlohmann::json& extra) {
  const auto& spec = model.spec();
  nlohmann::json meta{{"architecture", spec.architecture},
                      {"transforms", spec.transforms},
                      {"in_channels", spec.in_channels},
                      {"width", spec.width},
                      {"seed", spec.seed},
                      {"task_classes", model.task_classes()},
                      {"task_index", task_index},
                      {"extra", extra}};
  const auto state = named_state(model);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : state) tensors.push_back({{"name", name}, {"shape", t->shape()}});
  meta["tensors"] = tensors;
  const std::string header = meta.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t len = header.size();
  os.write(kMagic, sizeof kMagic);
  os.write(reinterpret_cast<const char*>(&version), sizeof version);
  os.write(reinterpret_cast<const char*>(&len), sizeof len);
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& [name, t] : state)
    os.write(reinterpret_cast<const char*>(t->data()),
             static_cast<std::streamsize>(t->size() * sizeof(float)));
  if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  is.read(magic, sizeof magic);
  is.read(reinterpret_cast<char*>(&version), sizeof version);
  is.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error(path.string() + " is not a checkpoint");
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  std::string header(len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(len));
  const auto meta = nlohmann::json::parse(header);

  ModelSpec spec;
  spec.architecture = meta.at("architecture").get<std::string>();
  spec.transforms = meta.at("transforms").get<int>();
  spec.in_channels = meta.at("in_channels").get<std::size_t>();
  spec.width = meta.at("width").get<std::size_t>();
  spec.seed = meta.at("seed").get<std::uint64_t>();
  const auto classes = meta.at("task_classes").get<std::vector<std::size_t>>();
  if (classes.empty()) throw std::runtime_error("checkpoint has no classifier blocks");

  Checkpoint ck{IncrementalModel(spec, classes.front()), meta.at("task_index").get<int>(),
                meta.value("extra", nlohmann::json::object())};
  for (std::size_t t = 1; t < classes.size(); ++t) ck.model.grow(classes[t]);

  const auto state = named_state(ck.model);
  const auto& tensors = meta.at("tensors");
  if (tensors.size() != state.size())
    throw std::runtime_error("checkpoint tensor count does not match the architecture");
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto shape = tensors[i].at("shape").get<Shape>();
    if (shape != state[i].second->shape())
      throw std::runtime_error("checkpoint tensor " + state[i].first + " has shape " +
                               shape_string(shape));
    is.read(reinterpret_cast<char*>(state[i].second->data()),
            static_cast<std::streamsize>(state[i].second->size() * sizeof(float)));
  }
  if (!is) throw std::runtime_error("truncated checkpoint " + path.string());
  return ck;
}

}  // namespace aggss
