// Copyright 2026 The evonas Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// PNG reading and writing through libpng, image folders and dataset
// manifests.

#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "evonas/tasks.hpp"
#include "json.hpp"

namespace evonas {

class IoError : public std::runtime_error {
 public:
  IoError(const std::string& file, const std::string& what)
      : std::runtime_error(file + ": " + what), file_(file) {}
  const std::string& file() const { return file_; }

 private:
  std::string file_;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

/// Decodes any 8- or 16-bit PNG to a (1,3,h,w) image in [0,1]. Grey is
/// replicated, palettes expanded, alpha dropped.
inline Image read_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError(path, "cannot open");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) throw IoError(path, "not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError(path, "libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError(path, "libpng initialisation failed");
  }
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 w = 0, h = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path, "corrupt PNG data");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  w = png_get_image_width(png, info);
  h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  if (stride != static_cast<std::size_t>(w) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path, "unsupported PNG layout");
  }
  pixels.resize(stride * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img(Shape{1, 3, static_cast<std::int64_t>(h), static_cast<std::int64_t>(w)});
  for (std::int64_t y = 0; y < img.shape().h; ++y)
    for (std::int64_t x = 0; x < img.shape().w; ++x)
      for (std::int64_t c = 0; c < 3; ++c)
        img.at(0, c, y, x) = static_cast<float>(pixels[static_cast<std::size_t>((y * img.shape().w + x) * 3 + c)]) / 255.f;
  return img;
}

/// Writes the first three channels (or a single grey channel) as 8-bit RGB.
inline void write_png(const std::string& path, const Image& img) {
  const Shape s = img.shape();
  if (s.n != 1 || (s.c != 1 && s.c < 3)) throw ShapeError("cannot write " + to_string(s) + " as PNG");
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError(path, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError(path, "libpng initialisation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError(path, "libpng initialisation failed");
  }
  std::vector<png_byte> pixels(static_cast<std::size_t>(s.h * s.w * 3));
  for (std::int64_t y = 0; y < s.h; ++y)
    for (std::int64_t x = 0; x < s.w; ++x)
      for (std::int64_t c = 0; c < 3; ++c) {
        const float v = img.at(0, s.c == 1 ? 0 : c, y, x);
        pixels[static_cast<std::size_t>((y * s.w + x) * 3 + c)] =
            static_cast<png_byte>(std::lround(std::clamp(double(v), 0.0, 1.0) * 255.0));
      }
  std::vector<png_bytep> rows(static_cast<std::size_t>(s.h));
  for (std::int64_t y = 0; y < s.h; ++y) rows[static_cast<std::size_t>(y)] = pixels.data() + y * s.w * 3;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path, "PNG encoding failed");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(s.w), static_cast<png_uint_32>(s.h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

/// Largest centred square crop followed by box (shrink) or nearest
/// (grow) resampling to side `size`.
inline Image center_crop_resize(const Image& img, std::int64_t size) {
  const Shape s = img.shape();
  const std::int64_t side = std::min(s.h, s.w);
  const std::int64_t oy = (s.h - side) / 2, ox = (s.w - side) / 2;
  Image out(Shape{1, 3, size, size});
  for (std::int64_t c = 0; c < 3; ++c)
    for (std::int64_t y = 0; y < size; ++y)
      for (std::int64_t x = 0; x < size; ++x) {
        const std::int64_t y0 = y * side / size, y1 = std::max(y0 + 1, (y + 1) * side / size);
        const std::int64_t x0 = x * side / size, x1 = std::max(x0 + 1, (x + 1) * side / size);
        double acc = 0;
        for (std::int64_t yy = y0; yy < y1; ++yy)
          for (std::int64_t xx = x0; xx < x1; ++xx) acc += img.at(0, c, oy + yy, ox + xx);
        out.at(0, c, y, x) = static_cast<float>(acc / static_cast<double>((y1 - y0) * (x1 - x0)));
      }
  return out;
}

/// All *.png files of a folder in lexicographic order. With size > 0 each
/// image is centre-cropped and resized to size×size; otherwise all images
/// must already share one shape.
inline ImageDataset load_image_folder(const std::string& folder, std::int64_t size = 0) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(folder, ec)) throw IoError(folder, "not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(folder)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png") files.push_back(entry.path());
  }
  if (files.empty()) throw IoError(folder, "no PNG images found");
  std::sort(files.begin(), files.end());
  ImageDataset ds;
  for (const auto& f : files) {
    Image img = read_png(f.string());
    if (size > 0) img = center_crop_resize(img, size);
    if (!ds.images.empty() && img.shape() != ds.images.front().shape()) {
      throw IoError(f.string(), "shape " + to_string(img.shape()) + " differs from " +
                                    to_string(ds.images.front().shape()) + " (pass a size to resize)");
    }
    ds.images.push_back(std::move(img));
    ds.sources.push_back(f.filename().string());
  }
  return ds;
}

inline nlohmann::json manifest_json(const ImageDataset& ds) {
  nlohmann::json doc;
  doc["count"] = ds.size();
  const Shape3 s = ds.image_shape();
  doc["shape"] = {s.c, s.h, s.w};
  doc["sources"] = ds.sources;
  for (const Split sp : {Split::Train, Split::Validation, Split::Test}) {
    const auto [a, b] = ds.range(sp);
    doc["splits"][std::string(name_of(sp))] = {a, b};
  }
  return doc;
}

inline void write_manifest(const std::string& path, const ImageDataset& ds) {
  std::ofstream out(path);
  if (!out) throw IoError(path, "cannot open for writing");
  out << manifest_json(ds).dump(2) << "\n";
}

}  // namespace evonas
