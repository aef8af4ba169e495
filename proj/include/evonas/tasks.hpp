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

// Image-restoration tasks: degradations, PSNR, procedural datasets,
// sequential splits and minibatch assembly. Images are float tensors of
// shape (1, 3, h, w) with values in [0, 1].

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "evonas/rng.hpp"
#include "evonas/tensor.hpp"

namespace evonas {

using Image = Tensor<float>;

enum class TaskKind {
  Identity,
  Superres2x,
  DenoiseUniform,
  DenoiseGaussian,
  Deblur,
  CompressiveSensing,
  Checkerboard,
};

inline constexpr std::array kAllTaskKinds = {TaskKind::Identity,        TaskKind::Superres2x,
                                             TaskKind::DenoiseUniform,  TaskKind::DenoiseGaussian,
                                             TaskKind::Deblur,          TaskKind::CompressiveSensing,
                                             TaskKind::Checkerboard};

inline std::string_view name_of(TaskKind k) {
  switch (k) {
    case TaskKind::Identity: return "identity";
    case TaskKind::Superres2x: return "superres";
    case TaskKind::DenoiseUniform: return "denoise_uniform";
    case TaskKind::DenoiseGaussian: return "denoise_gaussian";
    case TaskKind::Deblur: return "deblur";
    case TaskKind::CompressiveSensing: return "compressive_sensing";
    case TaskKind::Checkerboard: return "checkerboard";
  }
  return "?";
}

inline std::optional<TaskKind> parse_task(std::string_view s) {
  for (const TaskKind k : kAllTaskKinds)
    if (name_of(k) == s) return k;
  return std::nullopt;
}

struct TaskParams {
  double uniform_bound = 0.5;
  double gaussian_sigma = 0.2;
  double blur_sigma = 2.0;
  int blur_radius = 3;
  double keep_fraction = 0.25;
};

struct RestorationTask {
  TaskKind kind = TaskKind::DenoiseGaussian;
  TaskParams params;

  /// Compressive sensing feeds the network the mask as three extra channels.
  std::int64_t input_channels() const { return kind == TaskKind::CompressiveSensing ? 6 : 3; }
};

/// 10·log10(1/mse); +inf for a perfect reconstruction.
inline double psnr(double mse) {
  if (std::isnan(mse) || mse < 0) throw std::invalid_argument("psnr needs a non-negative mse");
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

inline double mse_of(const Image& a, const Image& b) {
  if (a.shape() != b.shape()) throw ShapeError("mse of mismatched images");
  double acc = 0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    acc += d * d;
  }
  return a.numel() ? acc / static_cast<double>(a.numel()) : 0.0;
}

/// Normalized 1-D Gaussian taps for offsets -r..r.
inline std::vector<double> gaussian_taps(double sigma, int radius) {
  std::vector<double> taps(static_cast<std::size_t>(2 * radius + 1));
  double total = 0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = sigma > 0 ? std::exp(-0.5 * i * i / (sigma * sigma)) : (i == 0 ? 1.0 : 0.0);
    taps[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& t : taps) t /= total;
  return taps;
}

/// The (2r+1)^2 blur kernel as the outer product of the 1-D taps.
inline std::vector<double> gaussian_kernel(double sigma, int radius) {
  const auto t = gaussian_taps(sigma, radius);
  std::vector<double> k;
  k.reserve(t.size() * t.size());
  for (double a : t)
    for (double b : t) k.push_back(a * b);
  return k;
}

/// Mirror index without repeating the edge sample (…2 1 | 0 1 2 … n-1 | n-2 …).
inline std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

namespace detail {

inline void check_image(const Image& img) {
  if (img.shape().n != 1 || img.shape().c != 3) {
    throw ShapeError("expected a (1,3,h,w) image, got " + to_string(img.shape()));
  }
}

inline Image box_down_nn_up(const Image& clean) {
  const Shape s = clean.shape();
  Image out(s);
  for (std::int64_t c = 0; c < s.c; ++c)
    for (std::int64_t by = 0; by < s.h; by += 2)
      for (std::int64_t bx = 0; bx < s.w; bx += 2) {
        double acc = 0;
        int cnt = 0;
        for (std::int64_t y = by; y < std::min(by + 2, s.h); ++y)
          for (std::int64_t x = bx; x < std::min(bx + 2, s.w); ++x) {
            acc += clean.at(0, c, y, x);
            ++cnt;
          }
        const auto v = static_cast<float>(acc / cnt);
        for (std::int64_t y = by; y < std::min(by + 2, s.h); ++y)
          for (std::int64_t x = bx; x < std::min(bx + 2, s.w); ++x) out.at(0, c, y, x) = v;
      }
  return out;
}

inline Image blur(const Image& clean, double sigma, int radius) {
  const Shape s = clean.shape();
  const auto taps = gaussian_taps(sigma, radius);
  Image tmp(s), out(s);
  for (std::int64_t c = 0; c < s.c; ++c)
    for (std::int64_t y = 0; y < s.h; ++y)
      for (std::int64_t x = 0; x < s.w; ++x) {
        double acc = 0;
        for (int k = -radius; k <= radius; ++k) acc += taps[static_cast<std::size_t>(k + radius)] * clean.at(0, c, y, reflect_index(x + k, s.w));
        tmp.at(0, c, y, x) = static_cast<float>(acc);
      }
  for (std::int64_t c = 0; c < s.c; ++c)
    for (std::int64_t y = 0; y < s.h; ++y)
      for (std::int64_t x = 0; x < s.w; ++x) {
        double acc = 0;
        for (int k = -radius; k <= radius; ++k) acc += taps[static_cast<std::size_t>(k + radius)] * tmp.at(0, c, reflect_index(y + k, s.h), x);
        out.at(0, c, y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
  return out;
}

}  // namespace detail

/// Exactly round(fraction·h·w) kept pixel positions, drawn by a partial
/// Fisher-Yates shuffle. Returns a 0/1 mask in row-major order.
inline std::vector<std::uint8_t> sample_mask(std::int64_t h, std::int64_t w, double fraction, Rng& rng) {
  const std::int64_t n = h * w;
  const auto keep = static_cast<std::int64_t>(std::llround(std::clamp(fraction, 0.0, 1.0) * static_cast<double>(n)));
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(n), 0);
  for (std::int64_t i = 0; i < keep; ++i) {
    const auto j = uniform_int(rng, i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    mask[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = 1;
  }
  return mask;
}

/// Corrupted network input for `clean`. Three channels, or six for
/// compressive sensing (masked image followed by the mask).
inline Image degrade(const Image& clean, const RestorationTask& task, Rng& rng) {
  detail::check_image(clean);
  const Shape s = clean.shape();
  const TaskParams& p = task.params;
  switch (task.kind) {
    case TaskKind::Identity:
      return clean;
    case TaskKind::Superres2x:
      return detail::box_down_nn_up(clean);
    case TaskKind::DenoiseUniform: {
      Image out = clean;
      for (float& v : out.vec()) {
        v = static_cast<float>(std::clamp(double(v) + uniform(rng, -p.uniform_bound, p.uniform_bound), 0.0, 1.0));
      }
      return out;
    }
    case TaskKind::DenoiseGaussian: {
      Image out = clean;
      if (p.gaussian_sigma <= 0) return out;
      std::normal_distribution<double> noise(0.0, p.gaussian_sigma);
      for (float& v : out.vec()) v = static_cast<float>(std::clamp(double(v) + noise(rng), 0.0, 1.0));
      return out;
    }
    case TaskKind::Deblur:
      return detail::blur(clean, p.blur_sigma, p.blur_radius);
    case TaskKind::CompressiveSensing: {
      const auto mask = sample_mask(s.h, s.w, p.keep_fraction, rng);
      Image out(Shape{1, 6, s.h, s.w});
      const std::int64_t plane = s.h * s.w;
      for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t i = 0; i < plane; ++i) {
          const float m = mask[static_cast<std::size_t>(i)] ? 1.f : 0.f;
          out[c * plane + i] = clean[c * plane + i] * m;
          out[(c + 3) * plane + i] = m;
        }
      return out;
    }
    case TaskKind::Checkerboard: {
      Image out = clean;
      for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t y = 0; y < s.h; ++y)
          for (std::int64_t x = 0; x < s.w; ++x)
            if ((x + y) % 2 == 1) out.at(0, c, y, x) = 0.f;
      return out;
    }
  }
  return clean;
}

inline Image degrade(const Image& clean, const RestorationTask& task, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return degrade(clean, task, rng);
}

/// The first three channels of a corrupted input (drops the CS mask).
inline Image visible_channels(const Image& corrupted) {
  const Shape s = corrupted.shape();
  if (s.c == 3) return corrupted;
  Image out(Shape{s.n, 3, s.h, s.w});
  const std::int64_t per = 3 * s.h * s.w;
  for (std::int64_t n = 0; n < s.n; ++n)
    std::copy_n(corrupted.data() + n * s.c * s.h * s.w, per, out.data() + n * per);
  return out;
}

// ---------------------------------------------------------------------------
// Datasets

enum class Split { Train, Validation, Test };

inline std::string_view name_of(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

struct ImageDataset {
  std::vector<Image> images;
  std::vector<std::string> sources;  // file names, or "synthetic:<seed>:<index>"

  std::size_t size() const { return images.size(); }
  /// Sequential 0.6 / 0.2 / 0.2 boundaries: [0, train_end) [train_end, val_end) [val_end, n).
  std::size_t train_end() const { return images.size() * 3 / 5; }
  std::size_t val_end() const { return train_end() + images.size() / 5; }

  std::pair<std::size_t, std::size_t> range(Split s) const {
    switch (s) {
      case Split::Train: return {0, train_end()};
      case Split::Validation: return {train_end(), val_end()};
      case Split::Test: return {val_end(), images.size()};
    }
    return {0, 0};
  }
  std::size_t split_size(Split s) const {
    const auto [a, b] = range(s);
    return b - a;
  }
  Shape3 image_shape() const { return images.empty() ? Shape3{3, 0, 0} : images.front().shape().per_sample(); }
};

namespace detail {

struct Blob {
  bool ellipse;
  double cy, cx, ry, rx, angle, alpha;
  std::array<double, 3> color;
};

}  // namespace detail

/// One procedural RGB image: a two-colour linear gradient, a few blended
/// ellipses and rectangles, and low-frequency sinusoidal texture.
inline Image synth_image(std::uint64_t seed, std::int64_t size) {
  Rng rng = make_rng(seed);
  const auto sz = static_cast<double>(size);
  std::array<double, 3> c0{}, c1{};
  for (auto& v : c0) v = uniform(rng, 0.1, 0.9);
  for (auto& v : c1) v = uniform(rng, 0.1, 0.9);
  const double theta = uniform(rng, 0.0, 2 * std::numbers::pi);
  const double gx = std::cos(theta), gy = std::sin(theta);
  std::vector<detail::Blob> blobs(static_cast<std::size_t>(uniform_int(rng, 1, 4)));
  for (auto& b : blobs) {
    b.ellipse = bernoulli(rng, 0.5);
    b.cy = uniform(rng, 0, sz);
    b.cx = uniform(rng, 0, sz);
    b.ry = uniform(rng, 0.1, 0.4) * sz;
    b.rx = uniform(rng, 0.1, 0.4) * sz;
    b.angle = uniform(rng, 0, std::numbers::pi);
    b.alpha = uniform(rng, 0.5, 1.0);
    for (auto& v : b.color) v = uniform01(rng);
  }
  struct Wave {
    double fy, fx, phase, amp;
  };
  std::array<std::array<Wave, 3>, 3> waves{};
  for (auto& ch : waves)
    for (auto& w : ch) w = {uniform(rng, -3, 3), uniform(rng, -3, 3), uniform(rng, 0, 2 * std::numbers::pi), uniform(rng, 0, 0.04)};

  Image img(Shape{1, 3, size, size});
  for (std::int64_t y = 0; y < size; ++y)
    for (std::int64_t x = 0; x < size; ++x) {
      const double u = (x + 0.5) / sz - 0.5, v = (y + 0.5) / sz - 0.5;
      const double t = std::clamp(0.5 + (u * gx + v * gy), 0.0, 1.0);
      std::array<double, 3> px{};
      for (int c = 0; c < 3; ++c) px[c] = c0[c] * (1 - t) + c1[c] * t;
      for (const auto& b : blobs) {
        const double dy = y + 0.5 - b.cy, dx = x + 0.5 - b.cx;
        const double ca = std::cos(b.angle), sa = std::sin(b.angle);
        const double ly = (ca * dy - sa * dx) / b.ry, lx = (sa * dy + ca * dx) / b.rx;
        const bool inside = b.ellipse ? (ly * ly + lx * lx <= 1.0) : (std::abs(ly) <= 1.0 && std::abs(lx) <= 1.0);
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) px[c] = px[c] * (1 - b.alpha) + b.color[c] * b.alpha;
      }
      for (int c = 0; c < 3; ++c) {
        double tex = 0;
        for (const Wave& w : waves[c]) tex += w.amp * std::sin(2 * std::numbers::pi * (w.fy * v + w.fx * u) + w.phase);
        img.at(0, c, y, x) = static_cast<float>(std::clamp(px[c] + tex, 0.0, 1.0));
      }
    }
  return img;
}

/// `count` procedural images of side `size` (8, 16, 32 or 64).
inline ImageDataset synth_dataset(std::uint64_t seed, std::size_t count, std::int64_t size) {
  if (size != 8 && size != 16 && size != 32 && size != 64) {
    throw std::invalid_argument("synthetic image size must be 8, 16, 32 or 64, got " + std::to_string(size));
  }
  ImageDataset ds;
  ds.images.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    ds.images.push_back(synth_image(derive_seed(seed, i), size));
    ds.sources.push_back("synthetic:" + std::to_string(seed) + ":" + std::to_string(i));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Minibatches

struct Batch {
  Tensor<float> input;   // (B, task channels, h, w)
  Tensor<float> target;  // (B, 3, h, w)
};

/// Stacks degraded copies of dataset images `indices` into one batch.
inline Batch assemble_batch(const ImageDataset& ds, const std::vector<std::size_t>& indices,
                            const RestorationTask& task, Rng& rng) {
  if (indices.empty()) throw std::invalid_argument("empty minibatch");
  const Shape3 s = ds.images.at(indices.front()).shape().per_sample();
  const auto b = static_cast<std::int64_t>(indices.size());
  const std::int64_t cin = task.input_channels();
  Batch out{Tensor<float>(Shape{b, cin, s.h, s.w}), Tensor<float>(Shape{b, 3, s.h, s.w})};
  for (std::int64_t k = 0; k < b; ++k) {
    const Image& clean = ds.images.at(indices[static_cast<std::size_t>(k)]);
    if (clean.shape().per_sample() != s) throw ShapeError("dataset images differ in shape");
    const Image corrupted = degrade(clean, task, rng);
    std::copy_n(corrupted.data(), corrupted.numel(), out.input.data() + k * corrupted.numel());
    std::copy_n(clean.data(), clean.numel(), out.target.data() + k * clean.numel());
  }
  return out;
}

/// `size` images drawn uniformly (with replacement) from one split.
inline Batch sample_batch(const ImageDataset& ds, Split split, std::size_t size, const RestorationTask& task,
                          Rng& rng) {
  const auto [lo, hi] = ds.range(split);
  if (hi <= lo) throw std::invalid_argument(std::string("split '") + std::string(name_of(split)) + "' is empty");
  std::vector<std::size_t> idx(size);
  for (auto& i : idx) i = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi) - 1));
  return assemble_batch(ds, idx, task, rng);
}

/// Consecutive batches covering a split once, each image degraded with a
/// seed derived from (seed, image index) so the result is order-free.
inline std::vector<Batch> split_batches(const ImageDataset& ds, Split split, std::size_t batch_size,
                                        const RestorationTask& task, std::uint64_t seed) {
  const auto [lo, hi] = ds.range(split);
  std::vector<Batch> out;
  for (std::size_t start = lo; start < hi; start += batch_size) {
    const std::size_t end = std::min(hi, start + batch_size);
    const auto b = static_cast<std::int64_t>(end - start);
    const Shape3 s = ds.images[start].shape().per_sample();
    Batch batch{Tensor<float>(Shape{b, task.input_channels(), s.h, s.w}), Tensor<float>(Shape{b, 3, s.h, s.w})};
    for (std::size_t i = start; i < end; ++i) {
      const Image corrupted = degrade(ds.images[i], task, derive_seed(seed, i));
      const auto k = static_cast<std::int64_t>(i - start);
      std::copy_n(corrupted.data(), corrupted.numel(), batch.input.data() + k * corrupted.numel());
      std::copy_n(ds.images[i].data(), ds.images[i].numel(), batch.target.data() + k * ds.images[i].numel());
    }
    out.push_back(std::move(batch));
  }
  return out;
}

/// PSNR of the corrupted input itself against the clean images of a split:
/// the do-nothing reference a restoration network must beat.
inline double corrupted_psnr(const ImageDataset& ds, Split split, const RestorationTask& task, std::uint64_t seed) {
  double total = 0;
  std::int64_t count = 0;
  for (const Batch& b : split_batches(ds, split, 16, task, seed)) {
    const Image vis = visible_channels(b.input);
    total += mse_of(vis, b.target) * static_cast<double>(vis.numel());
    count += vis.numel();
  }
  return psnr(count ? total / static_cast<double>(count) : 0.0);
}

}  // namespace evonas
