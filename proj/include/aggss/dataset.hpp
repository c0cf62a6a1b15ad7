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

// In-memory image datasets and the loaders behind them: CIFAR-10/100 binary
// archives, ImageNet-style image folders, and a procedural CIFAR-shaped
// generator used for tests and smoke runs.

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "aggss/tensor.hpp"

namespace aggss {

/// Raised when a dataset's files are not where the configuration says.
class DataMissing : public std::runtime_error {
 public:
  DataMissing(const std::filesystem::path& path, const std::string& what)
      : std::runtime_error(what + ": " + path.string()), path_(path) {}
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

/// Planar uint8 images (N, C, H, W) with integer labels.
struct ImageSet {
  std::size_t channels = 3, height = 32, width = 32;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return channels * height * width; }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return {pixels.data() + i * image_size(), image_size()};
  }
  /// Indices of every sample with the given label, in storage order.
  std::vector<std::size_t> indices_of(int label) const;
};

struct Dataset {
  std::string name;
  int num_classes = 0;
  ImageSet train, test;
  std::vector<std::string> class_names;
  std::array<float, 3> mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> stddev{0.25f, 0.25f, 0.25f};
};

struct SyntheticSpec {
  int classes = 10;
  int train_per_class = 100;
  int test_per_class = 50;
  std::size_t image_size = 32;
  std::uint64_t seed = 7;
};

struct DatasetSpec {
  std::string name = "synthetic";  // cifar10 | cifar100 | image-folder | synthetic
  std::filesystem::path root;
  /// Keep only the first `max_classes` classes (0 keeps all); labels are kept.
  int max_classes = 0;
  /// Image-folder datasets are resized to this square size.
  std::size_t image_size = 32;
  /// Optional download URL and required MD5 for archive verification.
  std::string url;
  std::string md5;
  SyntheticSpec synthetic;
};

Dataset load_cifar10(const std::filesystem::path& root);
Dataset load_cifar100(const std::filesystem::path& root);
Dataset load_image_folder(const std::filesystem::path& root, std::size_t image_size);
Dataset make_synthetic(const SyntheticSpec& spec);

/// Dispatches on spec.name, fetching and extracting archives when needed.
Dataset load_dataset(const DatasetSpec& spec);

/// Drops every class >= max_classes from both splits.
void restrict_classes(Dataset& ds, int max_classes);

/// Recomputes per-channel mean and standard deviation from the train split.
void compute_normalization(Dataset& ds);

struct Augmentation {
  std::size_t crop_pad = 4;
  bool horizontal_flip = true;
};

/// Normalised float batch (B, C, H, W) of the given samples. Random crop and
/// flip are applied when `augment` is non-null.
Tensor make_batch(const Dataset& ds, const ImageSet& set, std::span<const std::size_t> indices,
                  const Augmentation* augment = nullptr, std::mt19937_64* rng = nullptr);

// ---- fetching ---------------------------------------------------------------

std::string md5_file(const std::filesystem::path& path);
/// Extracts a gzip-compressed ustar archive below `dest`.
void extract_tar_gz(const std::filesystem::path& archive, const std::filesystem::path& dest);
void download_file(const std::string& url, const std::filesystem::path& dest);
/// Makes sure the archive for `spec` is unpacked below spec.root: downloads it
/// when a URL is configured, verifies the configured MD5, then extracts.
void ensure_dataset(const DatasetSpec& spec);

}  // namespace aggss
