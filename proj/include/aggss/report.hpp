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

// Presentation artifacts: SVG bar and line plots, the method x scenario AIA
// table, and Grad-CAM panel grids.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aggss/eval.hpp"
#include "aggss/image_io.hpp"
#include "aggss/kernels.hpp"
#include "aggss/scenario.hpp"

namespace aggss {

// ---- scenario bar plot --------------------------------------------------------

struct PlotBar {
  int cls = -1;                // -1 for the outlier bar of a task
  std::size_t labeled = 0;
  std::size_t unlabeled = 0;   // drawn hatched on top of the labelled part
};

struct PlotGroup {
  std::size_t task = 0;
  std::vector<PlotBar> bars;
};

/// One group per task, one bar per class in task order. Unlabelled pool
/// samples are attributed to their class; samples of outlier classes are
/// pooled into one extra bar per task.
std::vector<PlotGroup> scenario_plot_data(const TaskStream& stream,
                                          std::span<const int> train_labels);
std::string scenario_svg(const std::vector<PlotGroup>& groups, const std::string& title);

// ---- line plots ---------------------------------------------------------------

struct Series {
  std::string label;
  std::vector<double> x, y;
};

std::string line_plot_svg(const std::vector<Series>& series, const std::string& title,
                          const std::string& x_label, const std::string& y_label);

// ---- report table -------------------------------------------------------------

struct RunSummary {
  std::filesystem::path dir;
  std::string method;
  std::string scenario;
  std::filesystem::path manifest;
  std::vector<std::size_t> task_sizes;
  AccuracyMatrix accuracy;
  double aia = 0.0;
};

/// Reads config.json, metrics.json and manifest.json from a run directory.
RunSummary load_run(const std::filesystem::path& dir);

struct ReportTable {
  std::vector<std::string> methods;
  std::vector<std::string> scenarios;
  /// Mean AIA over the runs of each (method, scenario) cell.
  std::map<std::pair<std::string, std::string>, double> aia;
  std::map<std::pair<std::string, std::string>, std::size_t> runs;
  /// Empty unless a baseline is present and there is another method.
  std::string baseline;

  bool has_delta() const { return !baseline.empty(); }
  std::optional<double> delta(const std::string& method, const std::string& scenario) const;
};

/// Throws ConfigError when two runs of one scenario disagree on the task
/// structure; the message names both manifests.
ReportTable build_report(const std::vector<RunSummary>& runs, const std::string& baseline = "ce");
std::string render_report(const ReportTable& table);
/// acc[t][t] per task for every run of `scenario`.
std::vector<Series> accuracy_curves(const std::vector<RunSummary>& runs, const std::string& scenario);

// ---- Grad-CAM grids -------------------------------------------------------------

/// Draws `text` with a 3x5 pixel font, `scale` pixels per font pixel.
/// Letters are upper-cased; unknown characters render as blanks.
void draw_text(RasterImage& image, std::size_t x, std::size_t y, const std::string& text,
               std::size_t scale, const std::array<std::uint8_t, 3>& color);

/// Applies `t` to an interleaved raster, as expand_batch does to tensors.
RasterImage transform_raster(const RasterImage& in, const kernels::PixelTransform& t);

struct GradcamGrid {
  RasterImage image;
  std::size_t panels = 0;
  std::size_t panel_size = 0;
};

/// Panel 0 shows the input with the aggregated prediction, panel 1 + r the
/// r-th transformed view with its heatmap and per-view prediction.
GradcamGrid gradcam_grid(const RasterImage& input, const AttentionMap& map,
                         std::span<const std::string> slot_names, const std::string& header = {},
                         std::size_t scale = 4);

/// Stacks grids vertically (side-by-side comparison of two models).
GradcamGrid stack_grids(std::span<const GradcamGrid> grids);

}  // namespace aggss
