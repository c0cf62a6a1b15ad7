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

#include "aggss/image_io.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace aggss {
namespace {

RasterImage read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::string magic;
  is >> magic;
  if (magic != "P6" && magic != "P5") throw std::runtime_error(path.string() + ": not a P5/P6 file");
  auto next_int = [&] {
    is >> std::ws;
    while (is.peek() == '#') {
      std::string line;
      std::getline(is, line);
      is >> std::ws;
    }
    std::size_t v = 0;
    is >> v;
    return v;
  };
  const std::size_t w = next_int(), h = next_int(), maxval = next_int();
  is.get();
  if (!is || maxval != 255) throw std::runtime_error(path.string() + ": unsupported PNM header");
  const std::size_t src_channels = magic == "P6" ? 3 : 1;
  std::vector<std::uint8_t> raw(w * h * src_channels);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!is) throw std::runtime_error(path.string() + ": truncated image");
  RasterImage out(w, h, 3);
  for (std::size_t i = 0; i < w * h; ++i)
    for (std::size_t c = 0; c < 3; ++c) out.pixels[i * 3 + c] = raw[i * src_channels + (src_channels == 3 ? c : 0)];
  return out;
}

RasterImage read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw std::runtime_error(path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  RasterImage out(img.width, img.height, 3);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::runtime_error(path.string() + ": " + img.message);
  }
  return out;
}

}  // namespace

RasterImage read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw std::runtime_error(path.string() + ": no such file");
  std::ifstream is(path, std::ios::binary);
  char sig[2] = {0, 0};
  is.read(sig, 2);
  if (sig[0] == 'P' && (sig[1] == '6' || sig[1] == '5')) return read_pnm(path);
  return read_png(path);
}

void write_png(const std::filesystem::path& path, const RasterImage& image) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw std::runtime_error(path.string() + ": " + img.message);
}

RasterImage resize_nearest(const RasterImage& in, std::size_t width, std::size_t height) {
  RasterImage out(width, height, in.channels);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t sx = x * in.width / width, sy = y * in.height / height;
      std::memcpy(out.at(x, y), in.at(sx, sy), in.channels);
    }
  return out;
}

}  // namespace aggss
