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

#include "aggss/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "aggss/errors.hpp"
#include "aggss/transform.hpp"

namespace aggss {

namespace fs = std::filesystem;

namespace {

const char* const kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                "#9467bd", "#8c564b", "#e377c2", "#17becf"};

std::string fmt(double v, int precision = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Round-ish upper bound for an axis.
double nice_ceiling(double v) {
  if (v <= 0.0) return 1.0;
  const double p = std::pow(10.0, std::floor(std::log10(v)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0})
    if (m * p >= v) return m * p;
  return 10.0 * p;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw DataMissing(path, "missing run file");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace

// ---- scenario bar plot --------------------------------------------------------

std::vector<PlotGroup> scenario_plot_data(const TaskStream& stream, std::span<const int> train_labels) {
  const std::set<int> outliers(stream.outlier_classes.begin(), stream.outlier_classes.end());
  std::vector<PlotGroup> groups;
  for (std::size_t t = 0; t < stream.num_tasks(); ++t) {
    const auto& task = stream.tasks[t];
    PlotGroup g;
    g.task = t;
    std::map<int, std::size_t> position;
    for (int c : task.classes) {
      position[c] = g.bars.size();
      const auto it = task.class_counts.find(c);
      g.bars.push_back({c, it == task.class_counts.end() ? 0 : it->second, 0});
    }
    PlotBar outlier_bar{-1, 0, 0};
    for (auto idx : task.unlabeled) {
      if (idx >= train_labels.size()) throw std::out_of_range("unlabelled index outside the train split");
      const int c = train_labels[idx];
      if (auto it = position.find(c); it != position.end()) {
        ++g.bars[it->second].unlabeled;
      } else if (outliers.count(c)) {
        ++outlier_bar.unlabeled;
      } else {
        // Remainder of an earlier task's class.
        position[c] = g.bars.size();
        g.bars.push_back({c, 0, 1});
      }
    }
    if (outlier_bar.unlabeled) g.bars.push_back(outlier_bar);
    groups.push_back(std::move(g));
  }
  return groups;
}

std::string scenario_svg(const std::vector<PlotGroup>& groups, const std::string& title) {
  std::size_t bars = 0, top = 0;
  for (const auto& g : groups) {
    bars += g.bars.size();
    for (const auto& b : g.bars) top = std::max(top, b.labeled + b.unlabeled);
  }
  const double bar_w = std::clamp(900.0 / std::max<std::size_t>(bars, 1), 2.0, 24.0);
  const double gap = bar_w * 2.0;
  const double left = 60, plot_h = 300, top_margin = 40, bottom = 50;
  const double width = left + 20 + bars * bar_w + gap * static_cast<double>(groups.size());
  const double height = top_margin + plot_h + bottom;
  const double y_max = nice_ceiling(static_cast<double>(top));
  auto y_of = [&](double v) { return top_margin + plot_h * (1.0 - v / y_max); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width, 0) << "\" height=\""
     << fmt(height, 0) << "\">\n"
     << "<defs><pattern id=\"hatch\" patternUnits=\"userSpaceOnUse\" width=\"6\" height=\"6\" "
        "patternTransform=\"rotate(45)\"><rect width=\"6\" height=\"6\" fill=\"white\"/>"
        "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#444\" stroke-width=\"2\"/></pattern></defs>\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << fmt(width / 2, 0) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        "font-size=\"16\">" << escape(title) << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = y_max * k / 4.0;
    os << "<line x1=\"" << left << "\" x2=\"" << fmt(width - 10, 1) << "\" y1=\"" << fmt(y_of(v), 1)
       << "\" y2=\"" << fmt(y_of(v), 1) << "\" stroke=\"#ddd\"/>"
       << "<text x=\"" << left - 6 << "\" y=\"" << fmt(y_of(v) + 4, 1)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v, 0) << "</text>\n";
  }
  double x = left + gap / 2;
  for (const auto& g : groups) {
    const std::string color = kPalette[g.task % std::size(kPalette)];
    const double start = x;
    for (const auto& b : g.bars) {
      if (b.labeled) {
        os << "<rect class=\"labeled\" x=\"" << fmt(x, 1) << "\" y=\"" << fmt(y_of(b.labeled), 1)
           << "\" width=\"" << fmt(bar_w * 0.9, 1) << "\" height=\"" << fmt(plot_h * b.labeled / y_max, 1)
           << "\" fill=\"" << color << "\"><title>class " << b.cls << ": " << b.labeled
           << " labelled</title></rect>\n";
      }
      if (b.unlabeled) {
        const double base = static_cast<double>(b.labeled);
        os << "<rect class=\"unlabeled\" x=\"" << fmt(x, 1) << "\" y=\""
           << fmt(y_of(base + b.unlabeled), 1) << "\" width=\"" << fmt(bar_w * 0.9, 1) << "\" height=\""
           << fmt(plot_h * b.unlabeled / y_max, 1) << "\" fill=\"url(#hatch)\" stroke=\"" << color
           << "\"><title>" << (b.cls < 0 ? std::string("outliers") : "class " + std::to_string(b.cls))
           << ": " << b.unlabeled << " unlabelled</title></rect>\n";
      }
      x += bar_w;
    }
    os << "<text class=\"group\" x=\"" << fmt((start + x) / 2, 1) << "\" y=\""
       << fmt(top_margin + plot_h + 18, 1)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">Task " << g.task
       << "</text>\n";
    x += gap;
  }
  os << "<text x=\"" << fmt(width / 2, 0) << "\" y=\"" << fmt(height - 8, 0)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">classes grouped by task</text>\n"
     << "<text x=\"14\" y=\"" << fmt(top_margin + plot_h / 2, 0)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 14 "
     << fmt(top_margin + plot_h / 2, 0) << ")\">samples per class</text>\n</svg>\n";
  return os.str();
}

// ---- line plots ---------------------------------------------------------------

std::string line_plot_svg(const std::vector<Series>& series, const std::string& title,
                          const std::string& x_label, const std::string& y_label) {
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  bool first = true;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw std::invalid_argument("series '" + s.label + "' has x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        x_min = x_max = s.x[i];
        y_min = y_max = s.y[i];
        first = false;
      }
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      y_min = std::min(y_min, s.y[i]);
      y_max = std::max(y_max, s.y[i]);
    }
  }
  if (x_max == x_min) x_max = x_min + 1;
  const double pad = std::max(1.0, (y_max - y_min) * 0.1);
  y_min = std::floor(y_min - pad);
  y_max = std::ceil(y_max + pad);

  const double left = 60, right = 160, top = 40, plot_w = 480, plot_h = 300, bottom = 50;
  const double width = left + plot_w + right, height = top + plot_h + bottom;
  auto px = [&](double v) { return left + plot_w * (v - x_min) / (x_max - x_min); };
  auto py = [&](double v) { return top + plot_h * (1.0 - (v - y_min) / (y_max - y_min)); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width, 0) << "\" height=\""
     << fmt(height, 0) << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << fmt(left + plot_w / 2, 0)
     << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" << escape(title)
     << "</text>\n"
     << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << plot_w << "\" height=\"" << plot_h
     << "\" fill=\"none\" stroke=\"#888\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double v = y_min + (y_max - y_min) * k / 4.0;
    os << "<text x=\"" << left - 6 << "\" y=\"" << fmt(py(v) + 4, 1)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v, 1) << "</text>\n";
  }
  std::set<double> xs;
  for (const auto& s : series) xs.insert(s.x.begin(), s.x.end());
  for (double v : xs)
    os << "<text x=\"" << fmt(px(v), 1) << "\" y=\"" << fmt(top + plot_h + 16, 1)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(v, v == std::floor(v) ? 0 : 2)
       << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline class=\"series\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) os << (i ? " " : "") << fmt(px(s.x[i]), 1) << "," << fmt(py(s.y[i]), 1);
    os << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << "<circle cx=\"" << fmt(px(s.x[i]), 1) << "\" cy=\"" << fmt(py(s.y[i]), 1) << "\" r=\"3\" fill=\""
         << color << "\"><title>" << escape(s.label) << ": " << fmt(s.y[i]) << "</title></circle>\n";
    os << "<text x=\"" << fmt(left + plot_w + 12, 0) << "\" y=\"" << fmt(top + 14 + 18.0 * k, 0)
       << "\" font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color << "\">" << escape(s.label)
       << "</text>\n";
  }
  os << "<text x=\"" << fmt(left + plot_w / 2, 0) << "\" y=\"" << fmt(height - 10, 0)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(x_label) << "</text>\n"
     << "<text x=\"16\" y=\"" << fmt(top + plot_h / 2, 0)
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
     << fmt(top + plot_h / 2, 0) << ")\">" << escape(y_label) << "</text>\n</svg>\n";
  return os.str();
}

// ---- report table -------------------------------------------------------------

namespace {

std::string scenario_key(const nlohmann::json& config) {
  const auto& d = config.at("dataset");
  const auto& s = config.at("scenario");
  std::string key = d.at("name").get<std::string>() + "/" + s.at("kind").get<std::string>() + "/";
  if (s.at("kind") == "semi-supervised") {
    const auto splits = s.at("splits").get<std::vector<std::size_t>>();
    for (std::size_t i = 0; i < splits.size(); ++i) key += (i ? "-" : "") + std::to_string(splits[i]);
  } else {
    key += std::to_string(s.at("base").get<int>()) + "+" + std::to_string(s.at("increment").get<int>());
  }
  return key;
}

}  // namespace

RunSummary load_run(const fs::path& dir) {
  const auto config = read_json(dir / "config.json");
  const auto metrics = read_json(dir / "metrics.json");
  RunSummary r;
  r.dir = dir;
  r.manifest = dir / "manifest.json";
  try {
    r.method = config.at("method").get<std::string>();
    r.scenario = scenario_key(config);
    r.accuracy = AccuracyMatrix::from_json(metrics.at("accuracy"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(dir.string() + ": malformed run record: " + e.what());
  }
  if (r.accuracy.rows() == 0) throw ConfigError(dir.string() + ": run has no completed task");
  r.aia = average_incremental_accuracy(r.accuracy);
  if (!fs::exists(r.manifest)) throw DataMissing(r.manifest, "missing run file");
  r.task_sizes = import_manifest(r.manifest).task_sizes();
  if (r.accuracy.rows() != r.task_sizes.size())
    throw ConfigError(dir.string() + ": run is incomplete (" + std::to_string(r.accuracy.rows()) + " of " +
                      std::to_string(r.task_sizes.size()) + " tasks)");
  return r;
}

std::optional<double> ReportTable::delta(const std::string& method, const std::string& scenario) const {
  if (!has_delta() || method == baseline) return std::nullopt;
  const auto a = aia.find({method, scenario});
  const auto b = aia.find({baseline, scenario});
  if (a == aia.end() || b == aia.end()) return std::nullopt;
  return a->second - b->second;
}

ReportTable build_report(const std::vector<RunSummary>& runs, const std::string& baseline) {
  if (runs.empty()) throw ConfigError("report needs at least one run");
  ReportTable table;
  std::map<std::string, const RunSummary*> reference;
  std::map<std::pair<std::string, std::string>, double> sums;
  for (const auto& r : runs) {
    auto [it, fresh] = reference.emplace(r.scenario, &r);
    if (!fresh && it->second->task_sizes != r.task_sizes)
      throw ConfigError("incompatible runs for scenario " + r.scenario + ": " + it->second->manifest.string() +
                        " has " + std::to_string(it->second->task_sizes.size()) + " tasks, " +
                        r.manifest.string() + " has " + std::to_string(r.task_sizes.size()));
    if (std::find(table.methods.begin(), table.methods.end(), r.method) == table.methods.end())
      table.methods.push_back(r.method);
    if (fresh) table.scenarios.push_back(r.scenario);
    sums[{r.method, r.scenario}] += r.aia;
    ++table.runs[{r.method, r.scenario}];
  }
  for (const auto& [key, sum] : sums) table.aia[key] = sum / static_cast<double>(table.runs[key]);
  const bool present = std::find(table.methods.begin(), table.methods.end(), baseline) != table.methods.end();
  if (present && table.methods.size() > 1) {
    table.baseline = baseline;
    std::stable_partition(table.methods.begin(), table.methods.end(),
                          [&](const std::string& m) { return m == baseline; });
  }
  return table;
}

std::string render_report(const ReportTable& table) {
  std::ostringstream os;
  os << "| method |";
  for (const auto& s : table.scenarios) {
    os << " " << s << " |";
    if (table.has_delta()) os << " delta vs " << table.baseline << " |";
  }
  os << "\n|---|";
  for (std::size_t i = 0; i < table.scenarios.size(); ++i) os << (table.has_delta() ? "---:|---:|" : "---:|");
  os << "\n";
  for (const auto& m : table.methods) {
    os << "| " << m << " |";
    for (const auto& s : table.scenarios) {
      const auto it = table.aia.find({m, s});
      os << " " << (it == table.aia.end() ? std::string("-") : fmt(it->second)) << " |";
      if (table.has_delta()) {
        const auto d = table.delta(m, s);
        os << " " << (d ? (*d >= 0 ? "+" : "") + fmt(*d) : std::string("")) << " |";
      }
    }
    os << "\n";
  }
  return os.str();
}

std::vector<Series> accuracy_curves(const std::vector<RunSummary>& runs, const std::string& scenario) {
  std::vector<Series> out;
  for (const auto& r : runs) {
    if (r.scenario != scenario) continue;
    Series s;
    s.label = r.method + " (" + r.dir.filename().string() + ")";
    const auto diag = r.accuracy.diagonal();
    for (std::size_t t = 0; t < diag.size(); ++t) {
      s.x.push_back(static_cast<double>(t));
      s.y.push_back(diag[t]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---- Grad-CAM grids -------------------------------------------------------------

namespace {

// 3x5 glyphs, rows top to bottom, '1' = ink.
const std::map<char, const char*>& glyphs() {
  static const std::map<char, const char*> g{
      {'0', "111101101101111"}, {'1', "010110010010111"}, {'2', "111001111100111"},
      {'3', "111001111001111"}, {'4', "101101111001001"}, {'5', "111100111001111"},
      {'6', "111100111101111"}, {'7', "111001001010010"}, {'8', "111101111101111"},
      {'9', "111101111001111"}, {'A', "010101111101101"}, {'B', "110101110101110"},
      {'C', "011100100100011"}, {'D', "110101101101110"}, {'E', "111100110100111"},
      {'F', "111100110100100"}, {'G', "011100101101011"}, {'H', "101101111101101"},
      {'I', "111010010010111"}, {'J', "001001001101010"}, {'K', "101101110101101"},
      {'L', "100100100100111"}, {'M', "101111111101101"}, {'N', "110101101101101"},
      {'O', "010101101101010"}, {'P', "110101110100100"}, {'Q', "010101101110011"},
      {'R', "110101110101101"}, {'S', "011100010001110"}, {'T', "111010010010010"},
      {'U', "101101101101111"}, {'V', "101101101101010"}, {'W', "101101111111101"},
      {'X', "101101010101101"}, {'Y', "101101010010010"}, {'Z', "111001010100111"},
      {'-', "000000111000000"}, {':', "000010000010000"}, {'=', "000111000111000"},
      {'/', "001001010100100"}, {'.', "000000000000010"}, {'_', "000000000000111"},
      {'+', "000010111010000"}};
  return g;
}

std::array<std::uint8_t, 3> jet(float v) {
  auto ch = [](float x) {
    return static_cast<std::uint8_t>(std::lround(255.0f * std::clamp(1.5f - std::fabs(x), 0.0f, 1.0f)));
  };
  return {ch(4.0f * v - 3.0f), ch(4.0f * v - 2.0f), ch(4.0f * v - 1.0f)};
}

/// Bilinear sample of an (h, w) map at panel pixel (x, y) of a size x size panel.
float sample_map(const Tensor& map, std::size_t x, std::size_t y, std::size_t size) {
  const std::size_t h = map.dim(0), w = map.dim(1);
  auto coord = [&](std::size_t p, std::size_t n, std::size_t& lo, std::size_t& hi, float& f) {
    const float c = std::clamp((static_cast<float>(p) + 0.5f) * static_cast<float>(n) / static_cast<float>(size) - 0.5f,
                               0.0f, static_cast<float>(n - 1));
    lo = static_cast<std::size_t>(std::floor(c));
    hi = std::min(lo + 1, n - 1);
    f = c - static_cast<float>(lo);
  };
  std::size_t y0, y1, x0, x1;
  float fy, fx;
  coord(y, h, y0, y1, fy);
  coord(x, w, x0, x1, fx);
  const float top = map.at(y0, x0) * (1 - fx) + map.at(y0, x1) * fx;
  const float bot = map.at(y1, x0) * (1 - fx) + map.at(y1, x1) * fx;
  return top * (1 - fy) + bot * fy;
}

void blit_scaled(RasterImage& dst, const RasterImage& src, std::size_t ox, std::size_t oy, std::size_t scale) {
  for (std::size_t y = 0; y < src.height * scale; ++y)
    for (std::size_t x = 0; x < src.width * scale; ++x) {
      const std::uint8_t* s = src.at(x / scale, y / scale);
      std::uint8_t* d = dst.at(ox + x, oy + y);
      for (std::size_t c = 0; c < 3; ++c) d[c] = s[src.channels == 1 ? 0 : c];
    }
}

std::string transform_label(const kernels::PixelTransform& t) {
  return (t.flip ? "F" : "") + std::to_string(90 * (((t.quarter_turns % 4) + 4) % 4));
}

std::string slot_label(std::span<const std::string> names, int slot) {
  if (slot >= 0 && static_cast<std::size_t>(slot) < names.size()) return names[slot];
  return "S" + std::to_string(slot);
}

constexpr std::size_t kPad = 4, kFont = 2, kCaption = 5 * kFont + 2 * kPad;

}  // namespace

void draw_text(RasterImage& image, std::size_t x, std::size_t y, const std::string& text, std::size_t scale,
               const std::array<std::uint8_t, 3>& color) {
  const auto& g = glyphs();
  for (char raw : text) {
    const char ch = static_cast<char>(std::toupper(static_cast<unsigned char>(raw)));
    if (auto it = g.find(ch); it != g.end()) {
      for (std::size_t r = 0; r < 5; ++r)
        for (std::size_t c = 0; c < 3; ++c) {
          if (it->second[r * 3 + c] != '1') continue;
          for (std::size_t dy = 0; dy < scale; ++dy)
            for (std::size_t dx = 0; dx < scale; ++dx) {
              const std::size_t px = x + c * scale + dx, py = y + r * scale + dy;
              if (px < image.width && py < image.height) std::copy(color.begin(), color.end(), image.at(px, py));
            }
        }
    }
    x += 4 * scale;
  }
}

RasterImage transform_raster(const RasterImage& in, const kernels::PixelTransform& t) {
  if (t.quarter_turns % 2 != 0 && in.width != in.height)
    throw ShapeError("odd quarter turns need a square image");
  RasterImage out(in.width, in.height, in.channels);
  for (std::size_t i = 0; i < in.height; ++i)
    for (std::size_t j = 0; j < in.width; ++j) {
      std::size_t si, sj;
      kernels::transform_source(t, in.height, in.width, i, j, si, sj);
      std::copy_n(in.at(sj, si), in.channels, out.at(j, i));
    }
  return out;
}

GradcamGrid gradcam_grid(const RasterImage& input, const AttentionMap& map,
                         std::span<const std::string> slot_names, const std::string& header,
                         std::size_t scale) {
  if (input.width != input.height) throw ShapeError("gradcam_grid expects a square input");
  const std::size_t m = map.maps.size();
  const auto ts = TransformSet::rotations(static_cast<int>(m));
  GradcamGrid grid;
  grid.panels = m + 1;
  grid.panel_size = input.width * scale;
  const std::size_t header_h = header.empty() ? 0 : kCaption;
  const std::size_t cell = grid.panel_size + kPad;
  grid.image = RasterImage(kPad + cell * grid.panels, header_h + kPad + grid.panel_size + kCaption, 3);
  std::fill(grid.image.pixels.begin(), grid.image.pixels.end(), std::uint8_t{255});
  const std::array<std::uint8_t, 3> ink{0, 0, 0};
  if (!header.empty()) draw_text(grid.image, kPad, kPad, header, kFont, ink);

  const std::size_t oy = header_h + kPad;
  blit_scaled(grid.image, input, kPad, oy, scale);
  draw_text(grid.image, kPad, oy + grid.panel_size + kPad, "AGG " + slot_label(slot_names, map.aggregated_prediction),
            kFont, ink);
  for (std::size_t r = 0; r < m; ++r) {
    const RasterImage view = transform_raster(input, ts[static_cast<int>(r)]);
    const std::size_t ox = kPad + cell * (r + 1);
    blit_scaled(grid.image, view, ox, oy, scale);
    for (std::size_t y = 0; y < grid.panel_size; ++y)
      for (std::size_t x = 0; x < grid.panel_size; ++x) {
        const auto heat = jet(sample_map(map.maps[r], x, y, grid.panel_size));
        std::uint8_t* p = grid.image.at(ox + x, oy + y);
        for (std::size_t c = 0; c < 3; ++c)
          p[c] = static_cast<std::uint8_t>((static_cast<unsigned>(p[c]) + heat[c] + 1) / 2);
      }
    const int pred = r < map.predicted.size() ? map.predicted[r] : -1;
    draw_text(grid.image, ox, oy + grid.panel_size + kPad,
              transform_label(ts[static_cast<int>(r)]) + " " + slot_label(slot_names, pred), kFont, ink);
  }
  return grid;
}

GradcamGrid stack_grids(std::span<const GradcamGrid> grids) {
  if (grids.empty()) throw std::invalid_argument("stack_grids needs at least one grid");
  GradcamGrid out;
  std::size_t width = 0, height = 0;
  for (const auto& g : grids) {
    width = std::max(width, g.image.width);
    height += g.image.height;
    out.panels = std::max(out.panels, g.panels);
    out.panel_size = std::max(out.panel_size, g.panel_size);
  }
  out.image = RasterImage(width, height, 3);
  std::fill(out.image.pixels.begin(), out.image.pixels.end(), std::uint8_t{255});
  std::size_t y0 = 0;
  for (const auto& g : grids) {
    for (std::size_t y = 0; y < g.image.height; ++y)
      std::copy_n(g.image.at(0, y), g.image.width * 3, out.image.at(0, y0 + y));
    y0 += g.image.height;
  }
  return out;
}

}  // namespace aggss
