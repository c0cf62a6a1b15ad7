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

#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "aggss/eval.hpp"
#include "aggss/trainer.hpp"
#include "test_util.hpp"

namespace aggss {
namespace {

Dataset toy_dataset(int classes, int train, int test, std::size_t size = 16) {
  SyntheticSpec s;
  s.classes = classes;
  s.train_per_class = train;
  s.test_per_class = test;
  s.image_size = size;
  s.seed = 21;
  return make_synthetic(s);
}

IncrementalModel toy_model(int m, std::size_t classes, std::size_t width = 4) {
  ModelSpec spec;
  spec.architecture = "small-conv";
  spec.transforms = m;
  spec.width = width;
  spec.seed = 2;
  return build_model(spec, classes);
}

// ---- accuracy matrix ----------------------------------------------------------

TEST(AccuracyMatrix, AverageIncrementalAccuracy) {
  AccuracyMatrix two;
  two.add_row({80.0});
  two.add_row({70.0, 60.0});
  EXPECT_DOUBLE_EQ(average_incremental_accuracy(two), 70.0);

  AccuracyMatrix constant;
  for (std::size_t t = 0; t < 6; ++t) constant.add_row(std::vector<double>(t + 1, 42.5));
  EXPECT_DOUBLE_EQ(average_incremental_accuracy(constant), 42.5);

  AccuracyMatrix single;
  single.add_row({63.25});
  EXPECT_DOUBLE_EQ(average_incremental_accuracy(single), 63.25);
  EXPECT_THROW(average_incremental_accuracy(AccuracyMatrix{}), std::invalid_argument);
}

TEST(AccuracyMatrix, RowsAreValidated) {
  AccuracyMatrix m;
  EXPECT_THROW(m.add_row({}), std::invalid_argument);
  EXPECT_THROW(m.add_row({1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(m.add_row({101.0}), std::invalid_argument);
  EXPECT_THROW(m.add_row({-0.5}), std::invalid_argument);
  m.add_row({50.0});
  EXPECT_THROW(m.at(0, 1), std::out_of_range);
  m.add_row({40.0, 30.0});
  EXPECT_EQ(m.diagonal(), (std::vector<double>{50.0, 30.0}));
  EXPECT_EQ(AccuracyMatrix::from_json(m.to_json()), m);
}

TEST(EvaluateSeen, RowIsWeightedUnionOfTasks) {
  const Dataset ds = toy_dataset(6, 10, 7 + 0);
  const TaskStream stream = build_traditional(ds.train.labels, 6, 2, 2, 4);
  IncrementalModel model = toy_model(4, 2);
  model.grow(2);
  model.grow(2);
  const auto row = evaluate_seen(model, stream, ds, 2, 32);
  ASSERT_EQ(row.size(), 3u);
  double correct = 0.0, total = 0.0;
  for (std::size_t n = 0; n <= 2; ++n) {
    const auto& cls = stream.tasks[n].classes;
    const double count = 7.0 * static_cast<double>(cls.size());
    correct += accuracy_on_classes(model, ds, stream, cls, 32) / 100.0 * count;
    total += count;
    EXPECT_NEAR(row[n], 100.0 * correct / total, 1e-9);
  }

  IncrementalModel early = toy_model(4, 2);
  EXPECT_EQ(evaluate_seen(early, stream, ds, 0, 32).size(), 1u);
}

TEST(EvaluateSeen, MatchesExplicitAggregation) {
  const Dataset ds = toy_dataset(4, 5, 6);
  const TaskStream stream = build_traditional(ds.train.labels, 4, 4, 0, 1);
  IncrementalModel model = toy_model(4, 4);
  std::vector<std::size_t> idx(ds.test.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const Tensor images = make_batch(ds, ds.test, idx);
  const auto slots = stream.class_slots();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::vector<double> score(4, 0.0);
    for (int r = 0; r < 4; ++r) {
      const Tensor one({1, 3, 16, 16}, std::vector<float>(images.data() + i * 768, images.data() + (i + 1) * 768));
      const ExpandedBatch e = expand_batch(one, std::vector<int>{0}, 4, TransformSet::rotations(4));
      const Tensor raw = model.forward(e.images, false);
      for (std::size_t c = 0; c < 4; ++c) score[c] += raw.at(static_cast<std::size_t>(r), c * 4 + r) / 4.0;
    }
    const auto best = std::max_element(score.begin(), score.end()) - score.begin();
    correct += best == slots[ds.test.labels[i]];
  }
  const auto row = evaluate_seen(model, stream, ds, 0, 8);
  EXPECT_NEAR(row[0], 100.0 * static_cast<double>(correct) / static_cast<double>(idx.size()), 1e-9);
}

TEST(EvaluateSeen, UnrelatedLabelsGiveChanceAccuracy) {
  Dataset ds = toy_dataset(10, 2, 100, 8);
  std::mt19937_64 rng(99);
  std::shuffle(ds.test.labels.begin(), ds.test.labels.end(), rng);
  const TaskStream stream = build_traditional(ds.train.labels, 10, 10, 0, 1);
  IncrementalModel model = toy_model(2, 10, 2);
  const double acc = evaluate_seen(model, stream, ds, 0, 128)[0];
  const double sd = 100.0 * std::sqrt(0.1 * 0.9 / 1000.0);
  EXPECT_NEAR(acc, 10.0, 4.0 * sd);
}

// ---- Grad-CAM -----------------------------------------------------------------

// Closed-form Grad-CAM at the last convolutional stage: features are the
// spatial mean of that stage, so d(score)/dA_k is W[row, k] / (h * w).
Tensor reference_cam(IncrementalModel& model, const Tensor& image, std::size_t row) {
  Tensor act;
  model.forward(image, false, nullptr, model.backbone().default_cam_stage(), &act);
  const std::size_t k = act.dim(1), h = act.dim(2), w = act.dim(3);
  const Tensor& weight = model.head(0).weight().value;
  Tensor cam({h, w});
  for (std::size_t i = 0; i < h * w; ++i) {
    double s = 0.0;
    for (std::size_t ch = 0; ch < k; ++ch)
      s += static_cast<double>(weight.at(row, ch)) / static_cast<double>(h * w) * act[ch * h * w + i];
    cam[i] = static_cast<float>(std::max(s, 0.0));
  }
  float mx = 0.0f;
  for (float v : cam.values()) mx = std::max(mx, v);
  if (mx > 0.0f)
    for (auto& v : cam.values()) v /= mx;
  return cam;
}

TEST(GradCam, SingleTransformMatchesReference) {
  IncrementalModel model = toy_model(1, 5);
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor image = testing::random_tensor({1, 3, 16, 16}, rng);
    for (int target : {0, 3}) {
      const AttentionMap cam = gradcam(model, image, target);
      ASSERT_EQ(cam.maps.size(), 1u);
      const Tensor ref = reference_cam(model, image, static_cast<std::size_t>(target));
      ASSERT_EQ(cam.maps[0].shape(), ref.shape());
      EXPECT_LT(testing::max_abs_diff(cam.maps[0].values(), ref.values()), 1e-4);
    }
  }
}

TEST(GradCam, EveryTransformExplainsItsOwnUnit) {
  IncrementalModel model = toy_model(4, 3);
  std::mt19937_64 rng(9);
  const Tensor image = testing::random_tensor({1, 3, 16, 16}, rng);
  const AttentionMap cam = gradcam(model, image);
  ASSERT_EQ(cam.maps.size(), 4u);
  const ExpandedBatch e = expand_batch(image, std::vector<int>{0}, 3, TransformSet::rotations(4));
  const Tensor raw = model.forward(e.images, false);
  EXPECT_EQ(cam.aggregated_prediction, argmax_rows(aggregate_inference(raw, 4)).front());
  for (int r = 0; r < 4; ++r) {
    const Tensor one({1, 3, 16, 16}, std::vector<float>(e.images.row(r).begin(), e.images.row(r).end()));
    const auto unit = static_cast<std::size_t>(cam.targets[r] * 4 + r);
    EXPECT_EQ(cam.targets[r], cam.predicted[r]);
    EXPECT_LT(testing::max_abs_diff(cam.maps[r].values(), reference_cam(model, one, unit).values()), 1e-4);
  }
}

TEST(GradCam, MapsAreNormalisedWithTargetLayerShape) {
  IncrementalModel model = toy_model(2, 4);
  std::mt19937_64 rng(10);
  for (const std::string stage : {"stage1", "stage2", "stage3"}) {
    const Tensor image = testing::random_tensor({1, 3, 16, 16}, rng);
    Tensor act;
    model.forward(image, false, nullptr, stage, &act);
    const AttentionMap cam = gradcam(model, image, std::nullopt, stage);
    EXPECT_EQ(cam.stage, stage);
    for (const auto& map : cam.maps) {
      ASSERT_EQ(map.shape(), (Shape{act.dim(2), act.dim(3)}));
      float mx = 0.0f;
      for (float v : map.values()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
        mx = std::max(mx, v);
      }
      EXPECT_TRUE(mx == 0.0f || std::abs(mx - 1.0f) < 1e-6f);
    }
  }
}

TEST(GradCam, ZeroGradientsGiveZeroMaps) {
  IncrementalModel model = toy_model(4, 3);
  for (auto& v : model.head(0).weight().value.values()) v = 0.0f;
  std::mt19937_64 rng(11);
  const AttentionMap cam = gradcam(model, testing::random_tensor({1, 3, 16, 16}, rng));
  for (const auto& map : cam.maps)
    for (float v : map.values()) EXPECT_EQ(v, 0.0f);

  const Tensor act({2, 3, 3}, std::vector<float>(18, 1.0f));
  const std::vector<float> zero{0.0f, 0.0f}, negative{-1.0f, -2.0f};
  const Tensor from_zero = weighted_activation_map(act, zero);
  const Tensor from_negative = weighted_activation_map(act, negative);
  for (float v : from_zero.values()) EXPECT_EQ(v, 0.0f);
  for (float v : from_negative.values()) EXPECT_EQ(v, 0.0f);
}

TEST(GradCam, RejectsBadTargets) {
  IncrementalModel model = toy_model(2, 3);
  std::mt19937_64 rng(12);
  const Tensor image = testing::random_tensor({1, 3, 16, 16}, rng);
  EXPECT_THROW(gradcam(model, image, std::nullopt, "pool"), std::invalid_argument);
  EXPECT_THROW(gradcam(model, image, std::nullopt, "nowhere"), std::invalid_argument);
  EXPECT_THROW(gradcam(model, image, 3), std::out_of_range);
  EXPECT_THROW(gradcam(model, testing::random_tensor({2, 3, 16, 16}, rng)), ShapeError);
}

// ---- ablation -----------------------------------------------------------------

TEST(RotationAblation, SingleTransformEqualsPlainRun) {
  const Dataset ds = toy_dataset(3, 10, 10);
  ModelSpec spec;
  spec.architecture = "small-conv";
  spec.width = 4;
  spec.seed = 6;
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.milestones = {};
  cfg.batch_size = 16;
  cfg.learning_rate = 0.05;
  cfg.seed = 6;
  cfg.transforms = 1;
  const std::vector<int> only_one{1};
  const auto rows = rotation_ablation(ds, spec, only_one, cfg);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].transforms, 1);

  spec.transforms = 1;
  IncrementalModel model = build_model(spec, 3);
  const TaskStream stream = build_traditional(ds.train.labels, 3, 3, 1, cfg.seed);
  const ExemplarBuffer empty(0, SelectionPolicy::random);
  train_task(model, 0, stream, ds, empty, cfg, {}, nullptr);
  const auto classes = stream.classes_through(0);
  EXPECT_DOUBLE_EQ(rows[0].accuracy, accuracy_on_classes(model, ds, stream, classes));

  const std::vector<int> bad{3};
  EXPECT_THROW(rotation_ablation(ds, spec, bad, cfg), ConfigError);
}

}  // namespace
}  // namespace aggss
