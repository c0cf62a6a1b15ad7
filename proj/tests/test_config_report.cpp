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

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "aggss/config.hpp"
#include "aggss/report.hpp"
#include "test_util.hpp"

namespace aggss {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string config_error(const json& j) {
  try {
    parse_config(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

// ---- config -------------------------------------------------------------------

TEST(Config, DefaultsResolveAndRoundTrip) {
  const ExperimentConfig c = parse_config(json::object());
  EXPECT_EQ(c.train.transforms, 4);
  EXPECT_EQ(c.method, "aggss");
  EXPECT_EQ(c.scenario.base, 50);
  EXPECT_EQ(c.train.exemplar_budget, 2000u);
  const json resolved = to_json(c);
  EXPECT_EQ(to_json(parse_config(resolved)), resolved);
  for (const char* section : {"dataset", "scenario", "model", "train"}) EXPECT_TRUE(resolved.contains(section));
}

TEST(Config, SeedAndTransformsFlowIntoSections) {
  const ExperimentConfig c = parse_config(json{{"seed", 17}, {"train", {{"transforms", 1}}}});
  EXPECT_EQ(c.model.seed, 17u);
  EXPECT_EQ(c.train.seed, 17u);
  EXPECT_EQ(c.model.transforms, 1);
  EXPECT_EQ(c.method, "ce");
  const ExperimentConfig named = parse_config(json{{"method", "lwf"}, {"train", {{"transforms", 8}}}});
  EXPECT_EQ(named.method, "lwf");
}

TEST(Config, UnknownKeysAreRejectedWithTheirName) {
  EXPECT_NE(config_error(json{{"trian", json::object()}}).find("trian"), std::string::npos);
  const std::string e = config_error(json{{"train", {{"epoch", 3}}}});
  EXPECT_NE(e.find("epoch"), std::string::npos);
  EXPECT_NE(e.find("train"), std::string::npos);
  EXPECT_FALSE(config_error(json{{"model", {{"transforms", 4}}}}).empty());
  EXPECT_FALSE(config_error(json{{"plugins", {{{"kind", "distillation"}, {"temp", 2}}}}}).empty());
}

TEST(Config, TypesAndValuesAreChecked) {
  EXPECT_FALSE(config_error(json{{"train", {{"epochs", "ten"}}}}).empty());
  EXPECT_FALSE(config_error(json{{"train", {{"transforms", 3}}}}).empty());
  EXPECT_FALSE(config_error(json{{"scenario", {{"kind", "sideways"}}}}).empty());
  EXPECT_FALSE(config_error(json{{"model", {{"architecture", "vgg"}}}}).empty());
  EXPECT_FALSE(config_error(json{{"plugins", {{{"kind", "podnet"}}}}}).empty());
  EXPECT_FALSE(config_error(json::array()).empty());
}

TEST(Config, FileWithCommentsAndEnvironmentOverrides) {
  const fs::path path = fs::temp_directory_path() / "aggss_test_config.conf";
  {
    std::ofstream os(path);
    os << "// toy\n{\n  \"name\": \"x\", /* inline */\n  \"dataset\": {\"name\": \"cifar10\", \"root\": \"/data\"}\n}\n";
  }
  ::unsetenv(kDataRootEnv);
  ::unsetenv(kOutputDirEnv);
  EXPECT_EQ(load_config(path).dataset.root, fs::path("/data"));
  ::setenv(kDataRootEnv, "/elsewhere", 1);
  ::setenv(kOutputDirEnv, "/tmp/out", 1);
  const ExperimentConfig c = load_config(path);
  EXPECT_EQ(c.dataset.root, fs::path("/elsewhere"));
  EXPECT_EQ(c.output_dir, fs::path("/tmp/out"));
  ::unsetenv(kDataRootEnv);
  ::unsetenv(kOutputDirEnv);
  fs::remove(path);
  EXPECT_THROW(load_config(path), DataMissing);
}

TEST(Config, StreamAndPluginsFromConfig) {
  SyntheticSpec s;
  s.classes = 6;
  s.train_per_class = 4;
  s.test_per_class = 2;
  s.image_size = 8;
  const Dataset ds = make_synthetic(s);
  ExperimentConfig c = parse_config(json{{"seed", 3},
                                         {"scenario", {{"base", 2}, {"increment", 2}}},
                                         {"plugins", {{{"kind", "distillation"}, {"weight", 0.5}}}}});
  const TaskStream stream = build_stream(c, ds);
  EXPECT_EQ(stream.task_sizes(), (std::vector<std::size_t>{2, 2, 2}));
  EXPECT_EQ(stream, build_traditional(ds.train.labels, 6, 2, 2, 3));
  const auto plugins = make_plugins(c);
  ASSERT_EQ(plugins.size(), 1u);
  EXPECT_EQ(plugins[0]->name(), "distillation");
  EXPECT_DOUBLE_EQ(plugins[0]->weight(), 0.5);

  const fs::path manifest = fs::temp_directory_path() / "aggss_test_config_manifest.json";
  export_manifest(stream, manifest);
  c.scenario.manifest = manifest;
  c.scenario.base = 4;
  EXPECT_EQ(build_stream(c, ds), stream);
  SyntheticSpec bigger = s;
  bigger.classes = 8;
  EXPECT_THROW(build_stream(c, make_synthetic(bigger)), ConfigError);
  fs::remove(manifest);

  c.scenario.manifest.clear();
  c.scenario.increment = 3;
  EXPECT_THROW(build_stream(c, ds), ConfigError);
}

// ---- report table ---------------------------------------------------------------

RunSummary summary(const std::string& method, const std::string& scenario, std::vector<double> diag,
                   const std::string& manifest = "m.json") {
  RunSummary r;
  r.method = method;
  r.scenario = scenario;
  r.manifest = manifest;
  for (std::size_t t = 0; t < diag.size(); ++t) {
    std::vector<double> row(t + 1, diag[t]);
    r.accuracy.add_row(row);
    r.task_sizes.push_back(2);
  }
  r.aia = average_incremental_accuracy(r.accuracy);
  return r;
}

TEST(Report, DeltaIsMethodMinusBaseline) {
  const std::vector<RunSummary> runs{summary("aggss", "s", {80, 70}), summary("ce", "s", {70, 60}),
                                     summary("aggss", "s", {90, 80})};
  const ReportTable t = build_report(runs, "ce");
  ASSERT_TRUE(t.has_delta());
  EXPECT_EQ(t.methods.front(), "ce");
  EXPECT_DOUBLE_EQ(t.aia.at({"aggss", "s"}), 80.0);
  EXPECT_EQ(t.runs.at({"aggss", "s"}), 2u);
  EXPECT_DOUBLE_EQ(*t.delta("aggss", "s"), 80.0 - 65.0);
  EXPECT_FALSE(t.delta("ce", "s"));
  const std::string text = render_report(t);
  EXPECT_NE(text.find("delta vs ce"), std::string::npos);
  EXPECT_NE(text.find("+15.00"), std::string::npos);
}

TEST(Report, SingleRunHasNoDeltaColumn) {
  const ReportTable t = build_report({summary("aggss", "s", {50})}, "ce");
  EXPECT_FALSE(t.has_delta());
  EXPECT_EQ(render_report(t).find("delta"), std::string::npos);
  const ReportTable no_baseline = build_report({summary("aggss", "s", {50}), summary("lwf", "s", {40})}, "ce");
  EXPECT_FALSE(no_baseline.has_delta());
}

TEST(Report, DifferentTaskStructuresAreNotMerged) {
  const std::vector<RunSummary> runs{summary("ce", "s", {50, 40}, "first/manifest.json"),
                                     summary("aggss", "s", {50, 40, 30}, "second/manifest.json")};
  try {
    build_report(runs);
    FAIL() << "merged incompatible runs";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("first/manifest.json"), std::string::npos) << msg;
    EXPECT_NE(msg.find("second/manifest.json"), std::string::npos) << msg;
  }
  EXPECT_NO_THROW(build_report({summary("ce", "a", {50, 40}), summary("ce", "b", {50, 40, 30})}));
}

// ---- plots --------------------------------------------------------------------

std::vector<int> labels_for(int classes, int per_class) {
  std::vector<int> labels;
  for (int i = 0; i < per_class; ++i)
    for (int c = 0; c < classes; ++c) labels.push_back(c);
  return labels;
}

TEST(ScenarioPlot, TraditionalGroupsPerTask) {
  const auto labels = labels_for(100, 500);
  const TaskStream s = build_traditional(labels, 100, 50, 10, 1);
  const auto groups = scenario_plot_data(s, labels);
  ASSERT_EQ(groups.size(), 6u);
  EXPECT_EQ(groups[0].bars.size(), 50u);
  for (const auto& g : groups)
    for (const auto& b : g.bars) {
      EXPECT_EQ(b.labeled, 500u);
      EXPECT_EQ(b.unlabeled, 0u);
    }
  const std::string svg = scenario_svg(groups, "t");
  EXPECT_NE(svg.find("Task 5"), std::string::npos);
  EXPECT_EQ(svg.find("class=\"unlabeled\""), std::string::npos);
}

TEST(ScenarioPlot, SemiSupervisedHasHatchedSegments) {
  const auto labels = labels_for(100, 500);
  const std::vector<std::size_t> splits{20, 20, 20, 20};
  const TaskStream s = build_semisupervised(labels, 100, splits, SemiSupervisedOptions{}, 1);
  const auto groups = scenario_plot_data(s, labels);
  ASSERT_EQ(groups.size(), 3u);
  std::size_t unlabeled = 0, outlier_bars = 0;
  for (const auto& g : groups)
    for (const auto& b : g.bars) {
      unlabeled += b.unlabeled;
      outlier_bars += b.cls < 0;
    }
  std::size_t pooled = 0;
  for (const auto& t : s.tasks) pooled += t.unlabeled.size();
  EXPECT_EQ(unlabeled, pooled);
  EXPECT_EQ(outlier_bars, 3u);
  const std::string svg = scenario_svg(groups, "ss");
  EXPECT_NE(svg.find("<pattern id=\"hatch\""), std::string::npos);
  EXPECT_NE(svg.find("class=\"unlabeled\""), std::string::npos);
  EXPECT_NE(svg.find("url(#hatch)"), std::string::npos);
}

TEST(ScenarioPlot, OrderedLongTailBarsDecrease) {
  const auto labels = labels_for(100, 500);
  LongTailOptions o;
  o.max_per_class = 500;
  const auto groups = scenario_plot_data(build_longtail(labels, 100, 50, 10, o, 2), labels);
  std::vector<std::size_t> heights;
  for (const auto& g : groups)
    for (const auto& b : g.bars) heights.push_back(b.labeled);
  EXPECT_TRUE(std::is_sorted(heights.rbegin(), heights.rend()));
  EXPECT_GT(heights.front(), heights.back());
}

TEST(LinePlot, ContainsEverySeries) {
  const std::string svg = line_plot_svg({{"ce", {0, 1}, {70, 60}}, {"aggss", {0, 1}, {75, 66}}}, "t", "x", "y");
  EXPECT_NE(svg.find(">ce<"), std::string::npos);
  EXPECT_NE(svg.find(">aggss<"), std::string::npos);
  EXPECT_NE(svg.find("<svg"), std::string::npos);
}

// ---- Grad-CAM grids -------------------------------------------------------------

TEST(GradcamGrid, OnePanelPerTransformPlusOriginal) {
  RasterImage img(16, 16);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 7);
  const std::vector<std::string> names{"cat", "dog"};
  for (int m : {1, 2, 4, 8}) {
    AttentionMap map;
    for (int r = 0; r < m; ++r) {
      map.maps.push_back(Tensor({4, 4}, std::vector<float>(16, 0.5f)));
      map.predicted.push_back(r % 2);
    }
    map.aggregated_prediction = 1;
    const GradcamGrid g = gradcam_grid(img, map, names, {}, 4);
    EXPECT_EQ(g.panels, static_cast<std::size_t>(m + 1));
    EXPECT_EQ(g.panel_size, 64u);
    EXPECT_EQ(g.image.width, 4 + (64 + 4) * static_cast<std::size_t>(m + 1));
    if (m == 4) {
      const GradcamGrid with_header = gradcam_grid(img, map, names, "M=4", 4);
      const std::vector<GradcamGrid> pair{g, with_header};
      const GradcamGrid both = stack_grids(pair);
      EXPECT_EQ(both.image.height, g.image.height + with_header.image.height);
      EXPECT_EQ(both.panels, 5u);
    }
  }
}

TEST(GradcamGrid, RasterTransformsMatchTensorTransforms) {
  std::mt19937_64 rng(4);
  RasterImage img(5, 5);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);
  Tensor t({1, 3, 5, 5});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < 5; ++y)
      for (std::size_t x = 0; x < 5; ++x) t[(c * 5 + y) * 5 + x] = img.at(x, y)[c];
  const TransformSet ts = TransformSet::rotations(8);
  const ExpandedBatch e = expand_batch(t, std::vector<int>{0}, 1, ts);
  for (int r = 0; r < 8; ++r) {
    const RasterImage v = transform_raster(img, ts[r]);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 5; ++y)
        for (std::size_t x = 0; x < 5; ++x)
          ASSERT_EQ(static_cast<float>(v.at(x, y)[c]), e.images[((r * 3 + c) * 5 + y) * 5 + x]) << "view " << r;
  }
}

}  // namespace
}  // namespace aggss
