// Copyright (c) 2026 Stagelab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <png.h>

#include "stagelab/container.hpp"
#include "stagelab/half.hpp"
#include "stagelab/rng.hpp"
#include "stagelab/tensor.hpp"

namespace stagelab {

enum class StorageDtype { f16, f32 };

/// Immutable image classification dataset. Pixels live in (N,C,H,W) order,
/// values in [0,1]; storage defaults to 16-bit floats and is promoted at
/// batch assembly.
struct DatasetHandle {
  int channels = 0, height = 0, width = 0;
  std::vector<std::string> class_names;
  std::vector<int> labels;
  StorageDtype dtype = StorageDtype::f16;
  std::vector<std::uint16_t> data_f16;
  std::vector<float> data_f32;
  std::string source;  // "directory" or "synthetic"

  std::size_t count() const { return labels.size(); }
  std::size_t image_size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }

  void image(std::size_t i, float* out) const {
    const std::size_t sz = image_size();
    if (dtype == StorageDtype::f16) {
      const std::uint16_t* src = data_f16.data() + i * sz;
      for (std::size_t j = 0; j < sz; ++j) out[j] = f16_to_f32(src[j]);
    } else {
      std::memcpy(out, data_f32.data() + i * sz, sz * sizeof(float));
    }
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(class_names.size(), 0);
    for (int y : labels) counts[static_cast<std::size_t>(y)]++;
    return counts;
  }

  void push_image(const std::vector<float>& chw, int label) {
    if (dtype == StorageDtype::f16) {
      for (float v : chw) data_f16.push_back(f32_to_f16(v));
    } else {
      data_f32.insert(data_f32.end(), chw.begin(), chw.end());
    }
    labels.push_back(label);
  }
};

namespace detail {

/// Rescales a pattern to the exact mean `target_mean` while staying inside
/// [0,1]: x = m + a*(p - mean(p)) with a capped by the largest deviation.
inline void normalize_to_mean(std::vector<float>& p, double target_mean) {
  double mean = 0;
  for (float v : p) mean += v;
  mean /= static_cast<double>(p.size());
  double maxdev = 0;
  for (float v : p) maxdev = std::max(maxdev, std::abs(v - mean));
  double a = 1.0;
  if (maxdev > 0) a = std::min(1.0, 0.9 * std::min(target_mean, 1.0 - target_mean) / maxdev);
  for (float& v : p) v = static_cast<float>(target_mean + a * (v - mean));
}

}  // namespace detail

struct SynthSpec {
  std::string kind = "binary_blobs";  // or "kclass_textures"
  int n = 128;
  int classes = 2;  // used by kclass_textures
  int channels = 3, height = 64, width = 64;
  std::uint64_t seed = 0;
  double difficulty = 0.0;  // 0 = mean-separable classes
  double shift = 0.0;       // distribution perturbation for external-cohort variants
};

/// Binary dataset of gaussian blobs on noise. At difficulty 0 the per-image
/// mean intensity bands of the two classes are disjoint ([0.15,0.25] vs
/// [0.35,0.45]), so thresholding the mean at 0.30 classifies perfectly;
/// raising difficulty widens the bands until they overlap. `shift` perturbs
/// brightness and blob geometry to play the external-cohort role.
inline DatasetHandle synth_binary_blobs(const SynthSpec& spec) {
  DatasetHandle ds;
  ds.channels = spec.channels;
  ds.height = spec.height;
  ds.width = spec.width;
  ds.class_names = {"blob_lo", "blob_hi"};
  ds.source = "synthetic";
  Rng rng(spec.seed);

  const double d = spec.difficulty;
  const double band[2][2] = {{0.15, 0.25 + 0.20 * d}, {0.35 - 0.20 * d, 0.45}};
  const double band_shift = 0.04 * spec.shift;

  const int hw = spec.height * spec.width;
  std::vector<float> plane(static_cast<std::size_t>(hw));
  std::vector<float> chw(static_cast<std::size_t>(spec.channels) * hw);
  for (int i = 0; i < spec.n; ++i) {
    const int label = i % 2;
    const double noise_amp = 0.25 * (1.0 + 0.5 * spec.shift);
    for (int j = 0; j < hw; ++j)
      plane[static_cast<std::size_t>(j)] = static_cast<float>(rng.uniform(-noise_amp, noise_amp));
    const double cy = rng.uniform(0.25, 0.75) * spec.height;
    const double cx = rng.uniform(0.25, 0.75) * spec.width;
    const double sigma =
        rng.uniform(0.08, 0.18) * std::min(spec.height, spec.width) * (1.0 + 0.3 * spec.shift);
    const double amp = label == 1 ? 1.0 : 0.6;
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const double r2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        plane[static_cast<std::size_t>(y) * spec.width + x] +=
            static_cast<float>(amp * std::exp(-r2 / (2.0 * sigma * sigma)));
      }
    }
    const double m = rng.uniform(band[label][0], band[label][1]) + band_shift;
    detail::normalize_to_mean(plane, m);
    for (int c = 0; c < spec.channels; ++c)
      std::copy(plane.begin(), plane.end(), chw.begin() + static_cast<std::size_t>(c) * hw);
    ds.push_image(chw, label);
  }
  return ds;
}

/// k-class dataset of oriented sinusoid textures. Classes differ in both
/// spatial frequency and mean brightness; at difficulty 0 the brightness
/// bands are disjoint so nearest-band classification on the mean is exact.
inline DatasetHandle synth_kclass_textures(const SynthSpec& spec) {
  if (spec.classes < 2) raise("kclass_textures needs at least 2 classes");
  DatasetHandle ds;
  ds.channels = spec.channels;
  ds.height = spec.height;
  ds.width = spec.width;
  for (int c = 0; c < spec.classes; ++c) ds.class_names.push_back(concat("tex", c));
  ds.source = "synthetic";
  Rng rng(spec.seed);

  const int k = spec.classes;
  const double step = 0.5 / k;
  const double halfwidth = step * (0.2 + 0.6 * spec.difficulty);
  const double band_shift = 0.04 * spec.shift;

  const int hw = spec.height * spec.width;
  std::vector<float> plane(static_cast<std::size_t>(hw));
  std::vector<float> chw(static_cast<std::size_t>(spec.channels) * hw);
  const double scale = std::min(spec.height, spec.width);
  for (int i = 0; i < spec.n; ++i) {
    const int label = i % k;
    const double freq = (1.5 + 2.2 * label) * (1.0 + 0.3 * spec.shift);
    const double theta = rng.uniform(0.0, 3.141592653589793);
    const double phase = rng.uniform(0.0, 6.283185307179586);
    const double ct = std::cos(theta), st = std::sin(theta);
    const double noise_amp = 0.3 * (1.0 + 0.5 * spec.shift);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const double u = (x * ct + y * st) / scale;
        double v = 0.5 * std::sin(6.283185307179586 * freq * u + phase);
        v += rng.uniform(-noise_amp, noise_amp);
        plane[static_cast<std::size_t>(y) * spec.width + x] = static_cast<float>(v);
      }
    }
    const double center = 0.2 + step * (label + 0.5);
    const double m = rng.uniform(center - halfwidth, center + halfwidth) + band_shift;
    detail::normalize_to_mean(plane, m);
    for (int c = 0; c < spec.channels; ++c)
      std::copy(plane.begin(), plane.end(), chw.begin() + static_cast<std::size_t>(c) * hw);
    ds.push_image(chw, label);
  }
  return ds;
}

inline DatasetHandle synth_dataset(const SynthSpec& spec) {
  if (spec.kind == "binary_blobs") return synth_binary_blobs(spec);
  if (spec.kind == "kclass_textures") return synth_kclass_textures(spec);
  raise_config(concat("unknown synthetic dataset kind '", spec.kind,
                      "'; valid kinds: binary_blobs, kclass_textures"));
}

namespace detail {

inline DatasetHandle like(const DatasetHandle& src) {
  DatasetHandle ds;
  ds.channels = src.channels;
  ds.height = src.height;
  ds.width = src.width;
  ds.class_names = src.class_names;
  ds.dtype = src.dtype;
  ds.source = src.source;
  return ds;
}

inline void copy_sample(const DatasetHandle& src, std::size_t i, DatasetHandle& dst) {
  const std::size_t sz = src.image_size();
  if (src.dtype == StorageDtype::f16) {
    dst.data_f16.insert(dst.data_f16.end(), src.data_f16.begin() + i * sz,
                        src.data_f16.begin() + (i + 1) * sz);
  } else {
    dst.data_f32.insert(dst.data_f32.end(), src.data_f32.begin() + i * sz,
                        src.data_f32.begin() + (i + 1) * sz);
  }
  dst.labels.push_back(src.labels[i]);
}

}  // namespace detail

/// Class-balanced split. Per-class train counts use largest-remainder
/// rounding against a total of round(ratio * N): floor every class's exact
/// share, then hand out the leftovers by descending fractional remainder
/// (ties to the lower class index). Deterministic under `seed`.
inline std::pair<DatasetHandle, DatasetHandle> split(const DatasetHandle& ds, double ratio,
                                                     std::uint64_t seed) {
  if (ratio < 0.0 || ratio > 1.0) raise(concat("split ratio ", ratio, " out of [0,1]"));
  const std::size_t k = ds.class_names.size();
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < ds.count(); ++i)
    by_class[static_cast<std::size_t>(ds.labels[i])].push_back(i);
  for (std::size_t c = 0; c < k; ++c)
    if (by_class[c].size() < 2)
      raise(concat("split: class '", ds.class_names[c], "' has ", by_class[c].size(),
                   " samples, need at least 2"));

  const auto train_total =
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ds.count())));
  std::vector<std::size_t> take(k);
  std::vector<std::pair<double, std::size_t>> remainders;  // (-remainder, class) for stable order
  std::size_t floored = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double exact = ratio * static_cast<double>(by_class[c].size());
    take[c] = static_cast<std::size_t>(exact);
    floored += take[c];
    remainders.emplace_back(-(exact - static_cast<double>(take[c])), c);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t extra = 0; extra < train_total - floored && extra < k; ++extra)
    take[remainders[extra].second]++;

  Rng rng(seed);
  DatasetHandle train = detail::like(ds), test = detail::like(ds);
  for (std::size_t c = 0; c < k; ++c) {
    auto idx = by_class[c];
    rng.fork(c).shuffle(idx);
    for (std::size_t j = 0; j < idx.size(); ++j)
      detail::copy_sample(ds, idx[j], j < take[c] ? train : test);
  }
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Image decoding: PNG (8/16-bit gray or RGB, via libpng) and PGM (P2/P5).

struct DecodedImage {
  int channels = 0, height = 0, width = 0;
  std::vector<float> chw;  // [0,1]
};

namespace detail {

inline DecodedImage load_png(const std::filesystem::path& path) {
  std::FILE* fp = std::fopen(path.c_str(), "rb");
  if (!fp) raise(concat("cannot open '", path.string(), "'"));
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    if (png) png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    raise("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    raise(concat("failed to decode PNG '", path.string(), "'"));
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  const int in_color = png_get_color_type(png, info);
  if (in_color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (in_color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (in_color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  int channels;
  if (color == PNG_COLOR_TYPE_GRAY)
    channels = 1;
  else if (color == PNG_COLOR_TYPE_RGB)
    channels = 3;
  else {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    raise(concat("unsupported PNG color type in '", path.string(), "'"));
  }

  const std::size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> raw(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);

  DecodedImage img;
  img.channels = channels;
  img.height = static_cast<int>(h);
  img.width = static_cast<int>(w);
  img.chw.resize(static_cast<std::size_t>(channels) * h * w);
  const float denom = depth == 16 ? 65535.0f : 255.0f;
  for (png_uint_32 y = 0; y < h; ++y) {
    const std::uint8_t* row = raw.data() + y * rowbytes;
    for (png_uint_32 x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        std::uint32_t v;
        if (depth == 16) {
          const std::size_t o = (static_cast<std::size_t>(x) * channels + c) * 2;
          v = (static_cast<std::uint32_t>(row[o]) << 8) | row[o + 1];  // PNG is big-endian
        } else {
          v = row[static_cast<std::size_t>(x) * channels + c];
        }
        img.chw[(static_cast<std::size_t>(c) * h + y) * w + x] = static_cast<float>(v) / denom;
      }
    }
  }
  return img;
}

inline DecodedImage load_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(concat("cannot open '", path.string(), "'"));
  std::string magic;
  f >> magic;
  if (magic != "P5" && magic != "P2") raise(concat("'", path.string(), "' is not a PGM file"));
  auto next_int = [&]() -> long {
    // Skips whitespace and '#' comment lines.
    while (true) {
      int ch = f.peek();
      if (ch == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(ch)) {
        f.get();
      } else {
        break;
      }
    }
    long v;
    if (!(f >> v)) raise(concat("malformed PGM header in '", path.string(), "'"));
    return v;
  };
  const long w = next_int(), h = next_int(), maxval = next_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    raise(concat("malformed PGM header in '", path.string(), "'"));

  DecodedImage img;
  img.channels = 1;
  img.height = static_cast<int>(h);
  img.width = static_cast<int>(w);
  img.chw.resize(static_cast<std::size_t>(h) * w);
  const float denom = static_cast<float>(maxval);
  if (magic == "P2") {
    for (auto& px : img.chw) {
      long v;
      if (!(f >> v)) raise(concat("truncated PGM '", path.string(), "'"));
      px = static_cast<float>(v) / denom;
    }
  } else {
    f.get();  // single whitespace after maxval
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<std::uint8_t> raw(img.chw.size() * bytes);
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (f.gcount() != static_cast<std::streamsize>(raw.size()))
      raise(concat("truncated PGM '", path.string(), "'"));
    for (std::size_t i = 0; i < img.chw.size(); ++i) {
      const std::uint32_t v = bytes == 2
          ? (static_cast<std::uint32_t>(raw[i * 2]) << 8) | raw[i * 2 + 1]
          : raw[i];
      img.chw[i] = static_cast<float>(v) / denom;
    }
  }
  return img;
}

}  // namespace detail

/// Bilinear resize of a (C,H,W) image.
inline std::vector<float> resize_bilinear(const std::vector<float>& src, int c, int h, int w,
                                          int nh, int nw) {
  if (nh == h && nw == w) return src;
  std::vector<float> dst(static_cast<std::size_t>(c) * nh * nw);
  const double sy = nh > 1 ? static_cast<double>(h - 1) / (nh - 1) : 0.0;
  const double sx = nw > 1 ? static_cast<double>(w - 1) / (nw - 1) : 0.0;
  for (int ch = 0; ch < c; ++ch) {
    const float* s = src.data() + static_cast<std::size_t>(ch) * h * w;
    float* d = dst.data() + static_cast<std::size_t>(ch) * nh * nw;
    for (int y = 0; y < nh; ++y) {
      const double fy = y * sy;
      const int y0 = static_cast<int>(fy);
      const int y1 = std::min(y0 + 1, h - 1);
      const double wy = fy - y0;
      for (int x = 0; x < nw; ++x) {
        const double fx = x * sx;
        const int x0 = static_cast<int>(fx);
        const int x1 = std::min(x0 + 1, w - 1);
        const double wx = fx - x0;
        const double top = s[y0 * w + x0] * (1 - wx) + s[y0 * w + x1] * wx;
        const double bot = s[y1 * w + x0] * (1 - wx) + s[y1 * w + x1] * wx;
        d[static_cast<std::size_t>(y) * nw + x] = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return dst;
}

/// Loads root/<class_name>/*.png|pgm. Class names are the sorted
/// subdirectory names; files load in sorted order. Every image is conformed
/// to one shape: the first image's height/width (or an explicit target) and
/// RGB if any file is RGB, with grayscale replicated.
inline DatasetHandle load_directory(const std::filesystem::path& root, int target_h = 0,
                                    int target_w = 0) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) raise(concat("dataset root '", root.string(), "' is not a directory"));

  std::vector<std::string> classes;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) classes.push_back(entry.path().filename().string());
  std::sort(classes.begin(), classes.end());
  if (classes.empty()) raise(concat("dataset root '", root.string(), "' has no class directories"));

  struct Loaded {
    DecodedImage img;
    int label;
  };
  const auto lower_ext = [](const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    return ext;
  };
  std::vector<Loaded> images;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root / classes[c])) {
      if (!entry.is_regular_file()) continue;
      const std::string ext = lower_ext(entry.path());
      if (ext == ".png" || ext == ".pgm") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      DecodedImage img = lower_ext(f) == ".pgm" ? detail::load_pgm(f) : detail::load_png(f);
      images.push_back({std::move(img), static_cast<int>(c)});
    }
  }
  if (images.empty()) raise(concat("no .png or .pgm images under '", root.string(), "'"));

  int channels = 1;
  for (const auto& l : images) channels = std::max(channels, l.img.channels);
  const int h = target_h > 0 ? target_h : images[0].img.height;
  const int w = target_w > 0 ? target_w : images[0].img.width;

  DatasetHandle ds;
  ds.channels = channels;
  ds.height = h;
  ds.width = w;
  ds.class_names = classes;
  ds.source = "directory";
  std::vector<float> chw(static_cast<std::size_t>(channels) * h * w);
  for (const auto& l : images) {
    std::vector<float> resized =
        resize_bilinear(l.img.chw, l.img.channels, l.img.height, l.img.width, h, w);
    for (int c = 0; c < channels; ++c) {
      const int src_c = l.img.channels == channels ? c : 0;  // replicate grayscale
      std::copy(resized.begin() + static_cast<std::size_t>(src_c) * h * w,
                resized.begin() + static_cast<std::size_t>(src_c + 1) * h * w,
                chw.begin() + static_cast<std::size_t>(c) * h * w);
    }
    ds.push_image(chw, l.label);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset cache: STGW container with an object manifest. Image payload is
// f16 by default; labels are stored as f32 values.

inline void save_cache(const DatasetHandle& ds, const std::filesystem::path& path) {
  RawContainer c;
  std::vector<std::uint8_t>& payload = c.payload;

  const std::size_t n = ds.count();
  const Shape img_shape = {n, static_cast<std::size_t>(ds.channels),
                           static_cast<std::size_t>(ds.height), static_cast<std::size_t>(ds.width)};
  const char* img_dtype = ds.dtype == StorageDtype::f16 ? "f16" : "f32";
  const std::size_t img_bytes =
      numel(img_shape) * (ds.dtype == StorageDtype::f16 ? 2 : 4);

  const std::uint64_t img_off = 0;
  payload.resize(img_bytes);
  if (ds.dtype == StorageDtype::f16)
    std::memcpy(payload.data(), ds.data_f16.data(), img_bytes);
  else
    std::memcpy(payload.data(), ds.data_f32.data(), img_bytes);

  const std::uint64_t lbl_off = payload.size();
  payload.resize(payload.size() + n * 4);
  float* lbl = reinterpret_cast<float*>(payload.data() + lbl_off);
  for (std::size_t i = 0; i < n; ++i) lbl[i] = static_cast<float>(ds.labels[i]);

  nlohmann::json manifest = {
      {"kind", "dataset-cache"},
      {"source", ds.source},
      {"classes", ds.class_names},
      {"tensors",
       {{{"name", "images"}, {"dtype", img_dtype}, {"shape", img_shape}, {"offset", img_off}, {"length", img_bytes}},
        {{"name", "labels"}, {"dtype", "f32"}, {"shape", Shape{n}}, {"offset", lbl_off}, {"length", n * 4}}}}};
  c.manifest = manifest.dump();
  write_container(path, c);
}

inline DatasetHandle load_cache(const std::filesystem::path& path) {
  const RawContainer c = read_container(path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(c.manifest);
  } catch (const nlohmann::json::exception& e) {
    raise(concat(path.string(), ": malformed manifest: ", e.what()));
  }
  if (!manifest.is_object() || manifest.value("kind", "") != "dataset-cache")
    raise(concat(path.string(), ": not a dataset cache"));

  DatasetHandle ds;
  ds.class_names = manifest.at("classes").get<std::vector<std::string>>();
  ds.source = manifest.at("source").get<std::string>();

  const nlohmann::json* images = nullptr;
  const nlohmann::json* labels = nullptr;
  for (const auto& t : manifest.at("tensors")) {
    const std::string name = t.at("name").get<std::string>();
    if (name == "images") images = &t;
    if (name == "labels") labels = &t;
  }
  if (!images || !labels) raise(concat(path.string(), ": cache needs images and labels tensors"));

  const Shape img_shape = images->at("shape").get<Shape>();
  if (img_shape.size() != 4) raise(concat(path.string(), ": images tensor must be (N,C,H,W)"));
  const std::string dtype = images->at("dtype").get<std::string>();
  const std::uint64_t img_off = images->at("offset").get<std::uint64_t>();
  const std::uint64_t img_len = images->at("length").get<std::uint64_t>();
  const std::size_t bytes_per = dtype == "f16" ? 2 : dtype == "f32" ? 4 : 0;
  if (bytes_per == 0) raise(concat(path.string(), ": images dtype must be f16 or f32"));
  if (img_len != numel(img_shape) * bytes_per || img_off + img_len > c.payload.size())
    raise(concat(path.string(), ": images tensor does not fit the payload"));

  ds.channels = static_cast<int>(img_shape[1]);
  ds.height = static_cast<int>(img_shape[2]);
  ds.width = static_cast<int>(img_shape[3]);
  const std::size_t n = img_shape[0];
  ds.dtype = dtype == "f16" ? StorageDtype::f16 : StorageDtype::f32;
  if (ds.dtype == StorageDtype::f16) {
    ds.data_f16.resize(numel(img_shape));
    std::memcpy(ds.data_f16.data(), c.payload.data() + img_off, img_len);
  } else {
    ds.data_f32.resize(numel(img_shape));
    std::memcpy(ds.data_f32.data(), c.payload.data() + img_off, img_len);
  }

  const std::uint64_t lbl_off = labels->at("offset").get<std::uint64_t>();
  const std::uint64_t lbl_len = labels->at("length").get<std::uint64_t>();
  if (lbl_len != n * 4 || lbl_off + lbl_len > c.payload.size())
    raise(concat(path.string(), ": labels tensor does not fit the payload"));
  const float* lbl = reinterpret_cast<const float*>(c.payload.data() + lbl_off);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = static_cast<int>(lbl[i]);
    if (ds.labels[i] < 0 || static_cast<std::size_t>(ds.labels[i]) >= ds.class_names.size())
      raise(concat(path.string(), ": label out of range at sample ", i));
  }
  return ds;
}

/// Stacks dataset samples into a batch tensor conforming to a graph input:
/// grayscale replicates up to the target channel count and spatial dims are
/// bilinearly resized when they differ.
template <typename R>
Tensor<R> assemble_batch(const DatasetHandle& ds, const std::vector<std::size_t>& indices,
                         int target_c, int target_h, int target_w) {
  if (ds.channels != target_c && !(ds.channels == 1 && target_c > 1))
    raise(concat("dataset has ", ds.channels, " channels, graph wants ", target_c));
  Tensor<R> batch({indices.size(), static_cast<std::size_t>(target_c),
                   static_cast<std::size_t>(target_h), static_cast<std::size_t>(target_w)});
  std::vector<float> chw(ds.image_size());
  const std::size_t plane = static_cast<std::size_t>(target_h) * target_w;
  for (std::size_t s = 0; s < indices.size(); ++s) {
    ds.image(indices[s], chw.data());
    std::vector<float> sized =
        resize_bilinear(chw, ds.channels, ds.height, ds.width, target_h, target_w);
    R* dst = batch.ptr() + s * target_c * plane;
    for (int c = 0; c < target_c; ++c) {
      const int src_c = ds.channels == target_c ? c : 0;
      const float* sp = sized.data() + static_cast<std::size_t>(src_c) * plane;
      for (std::size_t j = 0; j < plane; ++j) dst[static_cast<std::size_t>(c) * plane + j] = static_cast<R>(sp[j]);
    }
  }
  return batch;
}

}  // namespace stagelab
