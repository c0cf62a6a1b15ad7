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

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "aggss/model.hpp"
#include "aggss/transform.hpp"
#include "test_util.hpp"

namespace aggss {
namespace {

namespace fs = std::filesystem;
using testing::random_tensor;

IncrementalModel tiny(const std::string& arch, int m, std::size_t base, std::size_t width = 2) {
  ModelSpec spec;
  spec.architecture = arch;
  spec.transforms = m;
  spec.width = width;
  spec.seed = 42;
  return build_model(spec, base);
}

// L = sum(logits * R); dL/dlogits = R.
double probe_loss(IncrementalModel& model, const Tensor& x, const Tensor& r) {
  const Tensor y = model.forward(x, true);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += double(y[i]) * r[i];
  return s;
}

// ReLU and max pooling are only piecewise smooth, so a few sampled entries
// may sit next to a kink; the bulk must agree. Residual blocks are covered
// layer by layer in the nn tests, where float round-off stays small.
TEST(IncrementalModel, ParameterGradientsMatchFiniteDifferences) {
  IncrementalModel model = tiny("small-conv", 2, 3, 4);
  model.grow(2);
  std::mt19937_64 rng(12);
  const Tensor x = random_tensor({4, 3, 16, 16}, rng);
  const Tensor r = random_tensor({4, model.output_width()}, rng);

  model.zero_grad();
  (void)model.forward(x, true);
  model.backward(r);

  std::size_t checked = 0, agree = 0;
  for (auto* p : model.parameters()) {
    std::uniform_int_distribution<std::size_t> pick(0, p->value.size() - 1);
    for (int n = 0; n < 4; ++n) {
      const std::size_t i = pick(rng);
      const float keep = p->value[i];
      const float h = 3e-4f;
      p->value[i] = keep + h;
      const double up = probe_loss(model, x, r);
      p->value[i] = keep - h;
      const double down = probe_loss(model, x, r);
      p->value[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      ++checked;
      if (std::fabs(fd - p->grad[i]) <= 1e-2 * std::max(1.0, std::fabs(fd))) ++agree;
    }
  }
  EXPECT_GE(static_cast<double>(agree), 0.9 * static_cast<double>(checked))
      << agree << " of " << checked << " entries agree";
}

TEST(IncrementalModel, OutputWidthFollowsGrowth) {
  IncrementalModel model = tiny("small-conv", 4, 50);
  EXPECT_EQ(model.output_width(), 200u);
  for (int t = 1; t <= 5; ++t) {
    model.grow(10);
    EXPECT_EQ(model.output_width(), 4u * (50 + 10 * t));
  }
  EXPECT_EQ(model.output_width(), 400u);
  EXPECT_EQ(model.classes_seen(), 100u);
  EXPECT_EQ(model.block_widths(), (std::vector<std::size_t>{200, 40, 40, 40, 40, 40}));
  std::mt19937_64 rng(1);
  EXPECT_EQ(model.forward(random_tensor({3, 3, 8, 8}, rng), false).shape(), (Shape{3, 400}));
}

TEST(IncrementalModel, GrowingKeepsOldLogits) {
  IncrementalModel model = tiny("small-conv", 4, 3);
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({2, 3, 8, 8}, rng);
  const Tensor before = model.forward(x, false);
  model.grow(2);
  const Tensor after = model.forward(x, false);
  ASSERT_EQ(after.dim(1), 20u);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(after.at(i, j), before.at(i, j));
}

TEST(IncrementalModel, RejectsUnknownSpecs) {
  EXPECT_THROW(tiny("vgg", 4, 2), std::invalid_argument);
  EXPECT_THROW(tiny("small-conv", 3, 2), std::invalid_argument);
  EXPECT_THROW(tiny("small-conv", 4, 0), std::invalid_argument);
}

TEST(IncrementalModel, CopiesAreDeep) {
  IncrementalModel a = tiny("resnet-32-like", 2, 2);
  IncrementalModel b = a;
  a.parameters().front()->value.fill(0.0f);
  EXPECT_NE(a.parameters().front()->value, b.parameters().front()->value);
}

TEST(Backbone, CamStageIsConvolutional) {
  for (const auto& arch : architectures()) {
    IncrementalModel m = tiny(arch, 1, 2);
    const std::string stage = m.backbone().default_cam_stage();
    bool found = false;
    for (const auto& s : m.backbone().stages())
      if (s.name == stage) found = s.convolutional;
    EXPECT_TRUE(found) << arch;
    EXPECT_FALSE(m.backbone().stages().back().convolutional);
    EXPECT_THROW(m.backbone().backward_to(Tensor({1, m.backbone().feature_dim()}), "nope"),
                 std::invalid_argument);
  }
}

TEST(ModelSnapshot, FrozenAndCounted) {
  IncrementalModel model = tiny("small-conv", 4, 2);
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({2, 3, 8, 8}, rng);
  const ModelSnapshot snap(model);
  EXPECT_EQ(snap.queries(), 0u);
  const Tensor y0 = snap.forward(x);
  for (auto* p : model.parameters()) p->value.fill(0.5f);
  model.grow(3);
  const Tensor y1 = snap.forward(x);
  EXPECT_EQ(y0, y1);
  EXPECT_EQ(snap.output_width(), 8u);
  EXPECT_EQ(snap.queries(), 2u);
}

TEST(Checkpoint, RoundTripRestoresOutputs) {
  IncrementalModel model = tiny("resnet-32-like", 4, 3);
  model.grow(2);
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({4, 3, 8, 8}, rng);
  (void)model.forward(x, true);  // move BN running statistics off their defaults
  const fs::path path = fs::temp_directory_path() / "aggss_test_roundtrip.ckpt";
  save_checkpoint(path, model, 1, {{"note", "hello"}});
  Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.task_index, 1);
  EXPECT_EQ(ck.extra.at("note"), "hello");
  EXPECT_EQ(ck.model.task_classes(), model.task_classes());
  EXPECT_EQ(ck.model.forward(x, false), model.forward(x, false));
  fs::remove(path);
}

TEST(Checkpoint, RejectsForeignFiles) {
  const fs::path path = fs::temp_directory_path() / "aggss_test_foreign.ckpt";
  std::ofstream(path) << "definitely not a checkpoint";
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
  fs::remove(path);
  EXPECT_THROW(load_checkpoint(path), std::runtime_error);
}

}  // namespace
}  // namespace aggss
