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

// Shared plumbing for the acceptance binaries: verdict lines, config and
// dataset lookup.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>

#include "aggss/config.hpp"

namespace aggss::acceptance {

namespace fs = std::filesystem;

class Verdicts {
 public:
  void record(int criterion, const std::string& title, bool pass, const std::string& detail) {
    std::printf("%s criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", criterion, title.c_str(), detail.c_str());
    std::fflush(stdout);
    failures_ += pass ? 0 : 1;
  }
  int exit_code() const { return failures_ == 0 ? 0 : 1; }

 private:
  int failures_ = 0;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

inline std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

inline fs::path config_path(const std::string& name) { return fs::path(AGGSS_SOURCE_DIR) / "configs" / name; }

/// Directory holding cifar-10/ and cifar-100/; AGGSS_DATASETS_DIR overrides
/// the default <source>/data.
inline fs::path datasets_dir() {
  if (const char* env = std::getenv("AGGSS_DATASETS_DIR"); env && *env) return env;
  return fs::path(AGGSS_SOURCE_DIR) / "data";
}

/// Loads a packaged config with its dataset root moved below datasets_dir()
/// and downloads disabled.
inline ExperimentConfig local_config(const std::string& name) {
  ExperimentConfig c = load_config(config_path(name));
  if (c.dataset.name == "cifar10" || c.dataset.name == "cifar100") {
    c.dataset.root = datasets_dir() / c.dataset.root.filename();
    c.dataset.url.clear();
  }
  return c;
}

/// The dataset, or the reason it is unavailable.
inline std::optional<Dataset> try_load(const DatasetSpec& spec, std::string& reason) {
  if (!fs::exists(spec.root) && spec.name != "synthetic") {
    reason = "dataset root not found: " + spec.root.string();
    return std::nullopt;
  }
  try {
    return load_dataset(spec);
  } catch (const DataMissing& e) {
    reason = e.what();
    return std::nullopt;
  }
}

}  // namespace aggss::acceptance
