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

#include "aggss/dataset.hpp"

#include <curl/curl.h>
#include <openssl/evp.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>

#include "aggss/errors.hpp"
#include "aggss/image_io.hpp"

namespace aggss {

namespace fs = std::filesystem;

std::vector<std::size_t> ImageSet::indices_of(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) out.push_back(i);
  return out;
}

// ---- CIFAR ----------------------------------------------------------------

namespace {

fs::path find_file(const fs::path& root, const std::vector<fs::path>& subdirs,
                   const std::string& file) {
  for (const auto& d : subdirs) {
    const fs::path p = root / d / file;
    if (fs::exists(p)) return p;
  }
  return {};
}

// Records are `label_bytes` label bytes followed by 3072 planar RGB bytes.
void read_cifar_records(const fs::path& file, std::size_t label_bytes, std::size_t label_offset,
                        ImageSet& set) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw DataMissing(file, "cannot open CIFAR batch");
  constexpr std::size_t kImage = 3 * 32 * 32;
  std::vector<char> record(label_bytes + kImage);
  while (is.read(record.data(), static_cast<std::streamsize>(record.size()))) {
    set.labels.push_back(static_cast<unsigned char>(record[label_offset]));
    set.pixels.insert(set.pixels.end(), record.begin() + static_cast<std::ptrdiff_t>(label_bytes),
                      record.end());
  }
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream is(p);
  for (std::string line; std::getline(is, line);)
    if (!line.empty()) out.push_back(line);
  return out;
}

}  // namespace

Dataset load_cifar10(const fs::path& root) {
  const std::vector<fs::path> dirs{".", "cifar-10-batches-bin"};
  Dataset ds;
  ds.name = "cifar10";
  ds.num_classes = 10;
  for (int b = 1; b <= 5; ++b) {
    const std::string f = "data_batch_" + std::to_string(b) + ".bin";
    const fs::path p = find_file(root, dirs, f);
    if (p.empty()) throw DataMissing(root / "cifar-10-batches-bin" / f, "CIFAR-10 batch not found");
    read_cifar_records(p, 1, 0, ds.train);
  }
  const fs::path test = find_file(root, dirs, "test_batch.bin");
  if (test.empty()) throw DataMissing(root / "cifar-10-batches-bin/test_batch.bin", "CIFAR-10 batch not found");
  read_cifar_records(test, 1, 0, ds.test);
  if (const fs::path meta = find_file(root, dirs, "batches.meta.txt"); !meta.empty())
    ds.class_names = read_lines(meta);
  compute_normalization(ds);
  return ds;
}

Dataset load_cifar100(const fs::path& root) {
  const std::vector<fs::path> dirs{".", "cifar-100-binary"};
  Dataset ds;
  ds.name = "cifar100";
  ds.num_classes = 100;
  const fs::path train = find_file(root, dirs, "train.bin");
  const fs::path test = find_file(root, dirs, "test.bin");
  if (train.empty()) throw DataMissing(root / "cifar-100-binary/train.bin", "CIFAR-100 split not found");
  if (test.empty()) throw DataMissing(root / "cifar-100-binary/test.bin", "CIFAR-100 split not found");
  // Byte 0 is the coarse label, byte 1 the fine label.
  read_cifar_records(train, 2, 1, ds.train);
  read_cifar_records(test, 2, 1, ds.test);
  if (const fs::path meta = find_file(root, dirs, "fine_label_names.txt"); !meta.empty())
    ds.class_names = read_lines(meta);
  compute_normalization(ds);
  return ds;
}

// ---- image folders ----------------------------------------------------------

namespace {

void append_image(ImageSet& set, const RasterImage& img, int label) {
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) set.pixels.push_back(img.at(x, y)[c]);
  set.labels.push_back(label);
}

}  // namespace

Dataset load_image_folder(const fs::path& root, std::size_t image_size) {
  if (!fs::is_directory(root / "train")) throw DataMissing(root / "train", "image folder split not found");
  fs::path test_dir = root / "val";
  if (!fs::is_directory(test_dir)) test_dir = root / "test";
  if (!fs::is_directory(test_dir)) throw DataMissing(root / "val", "image folder split not found");

  Dataset ds;
  ds.name = "image-folder";
  std::vector<std::string> classes;
  for (const auto& e : fs::directory_iterator(root / "train"))
    if (e.is_directory()) classes.push_back(e.path().filename().string());
  std::sort(classes.begin(), classes.end());
  ds.class_names = classes;
  ds.num_classes = static_cast<int>(classes.size());

  for (auto* split : {&ds.train, &ds.test}) {
    split->height = split->width = image_size;
    const fs::path dir = split == &ds.train ? root / "train" : test_dir;
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (!fs::is_directory(dir / classes[c])) continue;
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir / classes[c]))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files)
        append_image(*split, resize_nearest(read_image(f), image_size, image_size),
                     static_cast<int>(c));
    }
  }
  compute_normalization(ds);
  return ds;
}

// ---- synthetic ------------------------------------------------------------

namespace {

struct Primitive {
  int kind;  // 0 rect, 1 disk, 2 triangle, 3 bar
  double cx, cy, size;
  std::array<double, 3> color;
};

bool covers(const Primitive& p, double x, double y) {
  const double dx = x - p.cx, dy = y - p.cy;
  switch (p.kind) {
    case 0: return std::abs(dx) <= p.size && std::abs(dy) <= 0.6 * p.size;
    case 1: return dx * dx + dy * dy <= p.size * p.size;
    case 2: return dy >= -p.size && dy <= p.size && std::abs(dx) <= (dy + p.size) * 0.5;
    default: return std::abs(dy - 0.5 * dx) <= 0.35 * p.size && std::abs(dx) <= 1.4 * p.size;
  }
}

}  // namespace

Dataset make_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 1 || spec.train_per_class < 1 || spec.test_per_class < 1 || spec.image_size < 8)
    throw std::invalid_argument("synthetic dataset: classes, counts and image size must be positive");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double s = static_cast<double>(spec.image_size);

  // Each class is a fixed, rotation-asymmetric arrangement of three shapes.
  std::vector<std::vector<Primitive>> protos(spec.classes);
  for (auto& proto : protos)
    for (int k = 0; k < 3; ++k)
      proto.push_back({static_cast<int>(u(rng) * 4), s * (0.2 + 0.6 * u(rng)),
                       s * (0.2 + 0.6 * u(rng)), s * (0.08 + 0.12 * u(rng)),
                       {255 * u(rng), 255 * u(rng), 255 * u(rng)}});

  Dataset ds;
  ds.name = "synthetic";
  ds.num_classes = spec.classes;
  for (int c = 0; c < spec.classes; ++c) ds.class_names.push_back("class" + std::to_string(c));
  std::normal_distribution<double> noise(0.0, 18.0);
  auto render = [&](ImageSet& set, int label) {
    const std::size_t n = spec.image_size;
    std::vector<Primitive> shapes = protos[label];
    const double shift_x = (u(rng) - 0.5) * s * 0.25, shift_y = (u(rng) - 0.5) * s * 0.25;
    for (auto& p : shapes) {
      p.cx += shift_x + (u(rng) - 0.5) * 2.0;
      p.cy += shift_y + (u(rng) - 0.5) * 2.0;
      p.size *= 0.85 + 0.3 * u(rng);
      for (auto& ch : p.color) ch = std::clamp(ch + (u(rng) - 0.5) * 60.0, 0.0, 255.0);
    }
    if (u(rng) < 0.5) {
      Primitive d = protos[static_cast<int>(u(rng) * spec.classes) % spec.classes][static_cast<int>(u(rng) * 3) % 3];
      d.cx = s * u(rng);
      d.cy = s * u(rng);
      d.size *= 0.6;
      shapes.insert(shapes.begin(), d);
    }
    const std::array<double, 3> bg{60 + 80 * u(rng), 60 + 80 * u(rng), 60 + 80 * u(rng)};
    const double grad = (u(rng) - 0.5) * 60.0;
    const std::size_t base = set.pixels.size();
    set.pixels.resize(base + 3 * n * n);
    for (std::size_t y = 0; y < n; ++y)
      for (std::size_t x = 0; x < n; ++x) {
        std::array<double, 3> px = bg;
        for (auto& ch : px) ch += grad * (static_cast<double>(y) / s - 0.5);
        for (const auto& p : shapes)
          if (covers(p, x + 0.5, y + 0.5)) px = p.color;
        for (std::size_t ch = 0; ch < 3; ++ch)
          set.pixels[base + (ch * n + y) * n + x] =
              static_cast<std::uint8_t>(std::clamp(px[ch] + noise(rng), 0.0, 255.0));
      }
    set.labels.push_back(label);
  };
  for (auto* split : {&ds.train, &ds.test}) {
    split->height = split->width = spec.image_size;
    const int per_class = split == &ds.train ? spec.train_per_class : spec.test_per_class;
    for (int i = 0; i < per_class; ++i)
      for (int c = 0; c < spec.classes; ++c) render(*split, c);
  }
  compute_normalization(ds);
  return ds;
}

// ---- common -----------------------------------------------------------------

void restrict_classes(Dataset& ds, int max_classes) {
  if (max_classes <= 0 || max_classes >= ds.num_classes) return;
  for (auto* set : {&ds.train, &ds.test}) {
    ImageSet kept;
    kept.channels = set->channels;
    kept.height = set->height;
    kept.width = set->width;
    for (std::size_t i = 0; i < set->size(); ++i)
      if (set->labels[i] < max_classes) {
        const auto img = set->image(i);
        kept.pixels.insert(kept.pixels.end(), img.begin(), img.end());
        kept.labels.push_back(set->labels[i]);
      }
    *set = std::move(kept);
  }
  ds.num_classes = max_classes;
  if (ds.class_names.size() > static_cast<std::size_t>(max_classes))
    ds.class_names.resize(max_classes);
  compute_normalization(ds);
}

void compute_normalization(Dataset& ds) {
  const ImageSet& s = ds.train;
  if (s.size() == 0) return;
  const std::size_t plane = s.height * s.width;
  for (std::size_t c = 0; c < std::min<std::size_t>(3, s.channels); ++c) {
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const std::uint8_t* p = s.pixels.data() + i * s.image_size() + c * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        const double v = p[j] / 255.0;
        sum += v;
        sum2 += v * v;
      }
    }
    const double n = static_cast<double>(s.size() * plane);
    const double mean = sum / n;
    ds.mean[c] = static_cast<float>(mean);
    ds.stddev[c] = static_cast<float>(std::max(1e-3, std::sqrt(std::max(0.0, sum2 / n - mean * mean))));
  }
}

Tensor make_batch(const Dataset& ds, const ImageSet& set, std::span<const std::size_t> indices,
                  const Augmentation* augment, std::mt19937_64* rng) {
  const std::size_t c = set.channels, h = set.height, w = set.width;
  Tensor out({indices.size(), c, h, w});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto img = set.image(indices[b]);
    long oy = 0, ox = 0;
    bool flip = false;
    if (augment && rng) {
      const long pad = static_cast<long>(augment->crop_pad);
      std::uniform_int_distribution<long> shift(-pad, pad);
      oy = shift(*rng);
      ox = shift(*rng);
      flip = augment->horizontal_flip && std::uniform_int_distribution<int>(0, 1)(*rng) == 1;
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float mean = ds.mean[std::min<std::size_t>(ch, 2)];
      const float inv = 1.0f / ds.stddev[std::min<std::size_t>(ch, 2)];
      float* dst = out.data() + (b * c + ch) * h * w;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const long sy = static_cast<long>(y) + oy;
          long sx = static_cast<long>(flip ? w - 1 - x : x) + ox;
          float v = 0.0f;  // zero padding in normalised space
          if (sy >= 0 && sx >= 0 && sy < static_cast<long>(h) && sx < static_cast<long>(w))
            v = (img[(ch * h + sy) * w + sx] / 255.0f - mean) * inv;
          dst[y * w + x] = v;
        }
    }
  }
  return out;
}

// ---- fetching ---------------------------------------------------------------

std::string md5_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataMissing(path, "cannot open archive");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  EVP_DigestInit_ex(ctx.get(), EVP_md5(), nullptr);
  std::vector<char> buf(1 << 16);
  while (is) {
    is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(is.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return os.str();
}

void extract_tar_gz(const fs::path& archive, const fs::path& dest) {
  gzFile gz = gzopen(archive.c_str(), "rb");
  if (!gz) throw DataMissing(archive, "cannot open archive");
  std::unique_ptr<gzFile_s, decltype(&gzclose)> guard(gz, gzclose);
  auto read_exact = [&](char* buf, std::size_t n) {
    return gzread(gz, buf, static_cast<unsigned>(n)) == static_cast<int>(n);
  };
  char header[512];
  while (read_exact(header, 512)) {
    if (header[0] == '\0') break;  // end-of-archive block
    std::string name(header, strnlen(header, 100));
    const std::string prefix(header + 345, strnlen(header + 345, 155));
    if (!prefix.empty()) name = prefix + "/" + name;
    const std::size_t size = std::stoull(std::string(header + 124, strnlen(header + 124, 12)), nullptr, 8);
    const char type = header[156];
    const fs::path rel = fs::path(name).lexically_normal();
    if (rel.is_absolute() || (!rel.empty() && *rel.begin() == ".."))
      throw std::runtime_error("archive entry escapes destination: " + name);
    const std::size_t padded = (size + 511) / 512 * 512;
    std::vector<char> data(padded);
    if (padded && !read_exact(data.data(), padded)) throw std::runtime_error("truncated archive " + archive.string());
    if (type == '5') {
      fs::create_directories(dest / rel);
    } else if (type == '0' || type == '\0') {
      fs::create_directories((dest / rel).parent_path());
      std::ofstream os(dest / rel, std::ios::binary);
      os.write(data.data(), static_cast<std::streamsize>(size));
    }
  }
}

void download_file(const std::string& url, const fs::path& dest) {
  if (dest.has_parent_path()) fs::create_directories(dest.parent_path());
  std::FILE* f = std::fopen(dest.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot write " + dest.string());
  CURL* curl = curl_easy_init();
  curl_easy_setopt(curl, CURLOPT_URL, url.c_str());
  curl_easy_setopt(curl, CURLOPT_WRITEDATA, f);
  curl_easy_setopt(curl, CURLOPT_FOLLOWLOCATION, 1L);
  curl_easy_setopt(curl, CURLOPT_FAILONERROR, 1L);
  const CURLcode rc = curl_easy_perform(curl);
  curl_easy_cleanup(curl);
  std::fclose(f);
  if (rc != CURLE_OK) {
    fs::remove(dest);
    throw DataMissing(dest, std::string("download failed (") + curl_easy_strerror(rc) + ") for " + url);
  }
}

void ensure_dataset(const DatasetSpec& spec) {
  struct Layout {
    const char* marker;
    const char* archive;
  };
  static const std::map<std::string, Layout> layouts{
      {"cifar10", {"cifar-10-batches-bin/data_batch_1.bin", "cifar-10-binary.tar.gz"}},
      {"cifar100", {"cifar-100-binary/train.bin", "cifar-100-binary.tar.gz"}}};
  const auto it = layouts.find(spec.name);
  if (it == layouts.end()) return;
  const fs::path marker = spec.root / it->second.marker;
  if (fs::exists(marker) || fs::exists(spec.root / marker.filename())) return;
  const fs::path archive = spec.root / it->second.archive;
  if (!fs::exists(archive)) {
    if (spec.url.empty()) throw DataMissing(spec.root, "dataset not found and no download URL configured");
    download_file(spec.url, archive);
  }
  if (spec.md5.empty())
    throw ConfigError("dataset.md5 must be set to verify " + archive.string());
  const std::string got = md5_file(archive);
  if (got != spec.md5)
    throw std::runtime_error("checksum mismatch for " + archive.string() + ": expected " + spec.md5 +
                             ", got " + got);
  extract_tar_gz(archive, spec.root);
}

Dataset load_dataset(const DatasetSpec& spec) {
  Dataset ds;
  if (spec.name == "synthetic") {
    ds = make_synthetic(spec.synthetic);
  } else {
    if (spec.root.empty() || (!fs::exists(spec.root) && spec.url.empty()))
      throw DataMissing(spec.root, "dataset root does not exist");
    fs::create_directories(spec.root);
    ensure_dataset(spec);
    if (spec.name == "cifar10") ds = load_cifar10(spec.root);
    else if (spec.name == "cifar100") ds = load_cifar100(spec.root);
    else if (spec.name == "image-folder") ds = load_image_folder(spec.root, spec.image_size);
    else throw std::invalid_argument("unknown dataset '" + spec.name + "'");
  }
  restrict_classes(ds, spec.max_classes);
  return ds;
}

}  // namespace aggss
