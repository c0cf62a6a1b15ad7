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

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <omp.h>
#include <optional>
#include <sstream>

#include "aggss/config.hpp"
#include "aggss/report.hpp"

namespace fs = std::filesystem;
using namespace aggss;

namespace {

constexpr int kExitOk = 0, kExitRuntime = 1, kExitInput = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* c = cmd->add_option("--config", f.config, "experiment config (JSON, comments allowed)");
  if (config_required) c->required();
  cmd->add_option("--seed", f.seed, "override the config seed");
  cmd->add_option("--out", f.out, "output directory");
}

ExperimentConfig resolve_config(const CommonFlags& f) {
  ExperimentConfig cfg = load_config(f.config);
  if (f.seed) {
    cfg.seed = *f.seed;
    cfg.resolve();
  }
  if (!f.out.empty()) cfg.output_dir = f.out;
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

std::string join(const std::vector<double>& row) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(2);
  for (std::size_t i = 0; i < row.size(); ++i) os << (i ? " " : "") << row[i];
  return os.str();
}

int cmd_run(const CommonFlags& f, bool checkpoints) {
  const ExperimentConfig cfg = resolve_config(f);
  const Dataset ds = load_dataset(cfg.dataset);
  const TaskStream stream = build_stream(cfg, ds);
  const fs::path out = cfg.output_dir;
  fs::create_directories(out);
  write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
  export_manifest(stream, out / "manifest.json");
  const nlohmann::json env{{"seed", cfg.seed},
                           {"omp_max_threads", omp_get_max_threads()},
                           {"compiler", __VERSION__},
                           {"dataset", ds.name},
                           {"train_samples", ds.train.size()},
                           {"test_samples", ds.test.size()}};
  write_text(out / "environment.json", env.dump(2) + "\n");

  std::cout << "run " << cfg.name << " (" << cfg.method << ", M=" << cfg.train.transforms << ", "
            << stream.num_tasks() << " tasks, seed " << cfg.seed << ") -> " << out.string() << "\n";
  const auto plugins = make_plugins(cfg);
  RunOptions options;
  options.output_dir = out;
  options.save_checkpoints = checkpoints;
  options.on_task = [](std::size_t t, const std::vector<double>& row) {
    std::cout << "task " << t << " accuracy: " << join(row) << std::endl;
  };
  const RunRecord record = run_experiment(stream, ds, cfg.model, cfg.train, plugins, options);
  std::printf("average incremental accuracy: %.2f\n", record.average_incremental_accuracy);

  Series s{cfg.method, {}, {}};
  const auto diag = record.accuracy.diagonal();
  for (std::size_t t = 0; t < diag.size(); ++t) {
    s.x.push_back(static_cast<double>(t));
    s.y.push_back(diag[t]);
  }
  write_text(out / "accuracy.svg",
             line_plot_svg({s}, cfg.name, "task", "accuracy on seen classes (%)"));
  return kExitOk;
}

int cmd_make_scenario(const CommonFlags& f) {
  const ExperimentConfig cfg = resolve_config(f);
  const Dataset ds = load_dataset(cfg.dataset);
  const TaskStream stream = build_stream(cfg, ds);
  const fs::path out = cfg.output_dir;
  export_manifest(stream, out / "manifest.json");
  const auto groups = scenario_plot_data(stream, ds.train.labels);
  write_text(out / "scenario.svg", scenario_svg(groups, cfg.name + " (" + to_string(stream.kind) + ")"));
  for (const auto& w : stream.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "tasks:";
  for (auto n : stream.task_sizes()) std::cout << " " << n;
  std::cout << "\nwrote " << (out / "manifest.json").string() << " and " << (out / "scenario.svg").string()
            << "\n";
  return kExitOk;
}

int cmd_report(const CommonFlags& f, std::vector<std::string> dirs, std::string baseline) {
  if (!f.config.empty()) {
    std::ifstream is(f.config);
    if (!is) throw DataMissing(f.config, "cannot open report config");
    const auto j = nlohmann::json::parse(is, nullptr, true, true);
    for (auto it = j.begin(); it != j.end(); ++it)
      if (it.key() != "runs" && it.key() != "baseline")
        throw ConfigError("unknown key '" + it.key() + "' in report config");
    if (j.contains("runs"))
      for (const auto& r : j.at("runs")) dirs.push_back(r.get<std::string>());
    if (j.contains("baseline")) baseline = j.at("baseline").get<std::string>();
  }
  if (dirs.empty()) throw ConfigError("report needs at least one run directory");
  std::vector<RunSummary> runs;
  for (const auto& d : dirs) runs.push_back(load_run(d));
  const ReportTable table = build_report(runs, baseline);
  const std::string text = render_report(table);
  std::cout << text;
  const fs::path out = f.out.empty() ? fs::path("report") : fs::path(f.out);
  write_text(out / "report.md", text);
  for (std::size_t i = 0; i < table.scenarios.size(); ++i)
    write_text(out / ("accuracy_" + std::to_string(i) + ".svg"),
               line_plot_svg(accuracy_curves(runs, table.scenarios[i]), table.scenarios[i], "task",
                             "accuracy on seen classes (%)"));
  return kExitOk;
}

Tensor to_input(const RasterImage& img, const nlohmann::json& extra, std::size_t channels) {
  const auto mean = extra.value("mean", std::vector<float>{0.5f, 0.5f, 0.5f});
  const auto stddev = extra.value("stddev", std::vector<float>{0.25f, 0.25f, 0.25f});
  Tensor t({1, channels, img.height, img.width});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) {
        const std::uint8_t* p = img.at(x, y);
        const float v = channels == 1 ? (p[0] + p[1] + p[2]) / 3.0f : p[c];
        t[(c * img.height + y) * img.width + x] = (v / 255.0f - mean.at(c)) / stddev.at(c);
      }
  return t;
}

int cmd_gradcam(const CommonFlags& f, const std::vector<std::string>& checkpoints,
                const std::vector<std::string>& images, const std::string& stage) {
  if (checkpoints.empty() || checkpoints.size() > 2)
    throw ConfigError("gradcam takes one checkpoint, or two for side-by-side comparison");
  std::vector<Checkpoint> models;
  for (const auto& c : checkpoints) {
    if (!fs::exists(c)) throw DataMissing(c, "checkpoint not found");
    models.push_back(load_checkpoint(c));
  }
  const fs::path out = f.out.empty() ? fs::path("gradcam") : fs::path(f.out);
  fs::create_directories(out);
  nlohmann::json summary = nlohmann::json::array();
  std::size_t written = 0;
  for (const auto& path : images) {
    RasterImage raw;
    try {
      raw = read_image(path);
    } catch (const std::exception& e) {
      std::cerr << "warning: skipping " << path << ": " << e.what() << "\n";
      continue;
    }
    std::vector<GradcamGrid> grids;
    nlohmann::json entry{{"image", path}, {"models", nlohmann::json::array()}};
    for (std::size_t k = 0; k < models.size(); ++k) {
      auto& ck = models[k];
      const std::size_t size = ck.extra.value("image_size", std::size_t{32});
      const RasterImage input = resize_nearest(raw, size, size);
      const auto names = ck.extra.value("slot_names", std::vector<std::string>{});
      const AttentionMap map =
          gradcam(ck.model, to_input(input, ck.extra, ck.model.spec().in_channels), std::nullopt, stage);
      const std::string header = models.size() > 1 ? "M=" + std::to_string(ck.model.transforms()) : "";
      grids.push_back(gradcam_grid(input, map, names, header));
      entry["models"].push_back({{"checkpoint", checkpoints[k]},
                                 {"stage", map.stage},
                                 {"predicted", map.predicted},
                                 {"aggregated_prediction", map.aggregated_prediction}});
    }
    const GradcamGrid grid = stack_grids(grids);
    const fs::path dest = out / (fs::path(path).stem().string() + "_gradcam.png");
    write_png(dest, grid.image);
    entry["grid"] = dest.string();
    entry["panels"] = grid.panels;
    entry["rows"] = grids.size();
    summary.push_back(entry);
    ++written;
    std::cout << "wrote " << dest.string() << "\n";
  }
  write_text(out / "gradcam.json", summary.dump(2) + "\n");
  if (written == 0 && !images.empty()) std::cerr << "warning: no readable images\n";
  return kExitOk;
}

int cmd_ablation(const CommonFlags& f, const std::vector<int>& counts) {
  const ExperimentConfig cfg = resolve_config(f);
  const Dataset ds = load_dataset(cfg.dataset);
  const auto rows = rotation_ablation(ds, cfg.model, counts, cfg.train);
  nlohmann::json j = nlohmann::json::array();
  Series s{cfg.name, {}, {}};
  for (const auto& r : rows) {
    std::printf("M=%d accuracy: %.2f\n", r.transforms, r.accuracy);
    j.push_back({{"transforms", r.transforms}, {"accuracy", r.accuracy}});
    s.x.push_back(r.transforms);
    s.y.push_back(r.accuracy);
  }
  const fs::path out = cfg.output_dir;
  write_text(out / "ablation.json", j.dump(2) + "\n");
  write_text(out / "ablation.svg", line_plot_svg({s}, "accuracy vs image rotations", "image rotations", "accuracy (%)"));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Aggregated self-supervision for class-incremental learning"};
  app.require_subcommand(1);

  CommonFlags run_f, scen_f, rep_f, cam_f, abl_f;
  bool no_checkpoints = false;
  auto* run = app.add_subcommand("run", "train and evaluate an incremental experiment");
  add_common(run, run_f, true);
  run->add_flag("--no-checkpoints", no_checkpoints, "skip per-task checkpoints");

  auto* scen = app.add_subcommand("make-scenario", "build a task stream manifest and its bar plot");
  add_common(scen, scen_f, true);

  std::vector<std::string> run_dirs;
  std::string baseline = "ce";
  auto* rep = app.add_subcommand("report", "compare run directories");
  add_common(rep, rep_f, false);
  rep->add_option("runs", run_dirs, "run directories");
  rep->add_option("--baseline", baseline, "method the delta column is measured against");

  std::vector<std::string> ckpts, images;
  std::string stage;
  auto* cam = app.add_subcommand("gradcam", "attention-map grids for images");
  add_common(cam, cam_f, false);
  cam->add_option("--checkpoint", ckpts, "checkpoint; give two for side-by-side comparison")->required();
  cam->add_option("--stage", stage, "target stage (default: last convolutional stage)");
  cam->add_option("images", images, "input images (PNG, PPM, PGM)")->required();

  std::vector<int> counts{1, 2, 4, 8};
  auto* abl = app.add_subcommand("ablation", "non-incremental accuracy for several transform counts");
  add_common(abl, abl_f, true);
  abl->add_option("--transforms", counts, "transform counts to compare")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*run) return cmd_run(run_f, !no_checkpoints);
    if (*scen) return cmd_make_scenario(scen_f);
    if (*rep) return cmd_report(rep_f, run_dirs, baseline);
    if (*cam) return cmd_gradcam(cam_f, ckpts, images, stage);
    if (*abl) return cmd_ablation(abl_f, counts);
  } catch (const DataMissing& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
