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

// Binary weight blobs. Layout, all integers little-endian:
//
//   "EVNW"              4 bytes magic
//   u32 version         currently 1
//   u32 P               number of parameters
//   P times:
//     u32 L, L bytes    parameter name (UTF-8)
//     4 × i64           shape (n, c, h, w)
//     n·c·h·w × f32     values, row-major
//   u32 B               number of batch-norm layers
//   B times:
//     u32 C             channels
//     C × f32           running mean
//     C × f32           running variance

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "evonas/compiler.hpp"

namespace evonas {

inline constexpr char kWeightsMagic[4] = {'E', 'V', 'N', 'W'};
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "weight blobs assume a little-endian host");

template <typename U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& in, const std::string& path) {
  U v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(U))) throw std::runtime_error(path + ": truncated weight file");
  return v;
}

inline void put_floats(std::ostream& out, const Tensor<float>& t) {
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

inline void get_floats(std::istream& in, Tensor<float>& t, const std::string& path) {
  if (!in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)))) {
    throw std::runtime_error(path + ": truncated weight file");
  }
}

}  // namespace detail

inline void save_weights(const std::string& path, const ModelParams<float>& mp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out.write(kWeightsMagic, 4);
  detail::put<std::uint32_t>(out, kWeightsVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(mp.params.size()));
  for (const auto& p : mp.params) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const Shape s = p.value.shape();
    for (std::int64_t d : {s.n, s.c, s.h, s.w}) detail::put<std::int64_t>(out, d);
    detail::put_floats(out, p.value);
  }
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(mp.bn_stats.size()));
  for (const auto& bn : mp.bn_stats) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(bn.mean.numel()));
    detail::put_floats(out, bn.mean);
    detail::put_floats(out, bn.var);
  }
  if (!out) throw std::runtime_error(path + ": write failed");
}

inline ModelParams<float> load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kWeightsMagic, 4) != 0) throw std::runtime_error(path + ": not a weight file");
  if (detail::get<std::uint32_t>(in, path) != kWeightsVersion) throw std::runtime_error(path + ": unsupported version");
  ModelParams<float> mp;
  const auto count = detail::get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::get<std::uint32_t>(in, path);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw std::runtime_error(path + ": truncated weight file");
    Shape s;
    s.n = detail::get<std::int64_t>(in, path);
    s.c = detail::get<std::int64_t>(in, path);
    s.h = detail::get<std::int64_t>(in, path);
    s.w = detail::get<std::int64_t>(in, path);
    Tensor<float> v(s);
    detail::get_floats(in, v, path);
    mp.params.emplace_back(std::move(name), std::move(v));
  }
  const auto bn = detail::get<std::uint32_t>(in, path);
  for (std::uint32_t i = 0; i < bn; ++i) {
    BatchNormStats<float> st(detail::get<std::uint32_t>(in, path));
    detail::get_floats(in, st.mean, path);
    detail::get_floats(in, st.var, path);
    mp.bn_stats.push_back(std::move(st));
  }
  return mp;
}

}  // namespace evonas
