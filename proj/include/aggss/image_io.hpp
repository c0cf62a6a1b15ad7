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

#include <cstdint>
#include <filesystem>
#include <vector>

namespace aggss {

/// Interleaved 8-bit image (row-major, `channels` values per pixel).
struct RasterImage {
  std::size_t width = 0, height = 0, channels = 3;
  std::vector<std::uint8_t> pixels;

  RasterImage() = default;
  RasterImage(std::size_t w, std::size_t h, std::size_t c = 3)
      : width(w), height(h), channels(c), pixels(w * h * c, 0) {}
  std::uint8_t* at(std::size_t x, std::size_t y) { return &pixels[(y * width + x) * channels]; }
  const std::uint8_t* at(std::size_t x, std::size_t y) const {
    return &pixels[(y * width + x) * channels];
  }
};

/// Reads PNG or binary PPM (P6) / PGM (P5). Output is always RGB.
RasterImage read_image(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RasterImage& image);

/// Nearest-neighbour resize.
RasterImage resize_nearest(const RasterImage& in, std::size_t width, std::size_t height);

}  // namespace aggss
