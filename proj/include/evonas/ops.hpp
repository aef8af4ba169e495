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

// Differentiable primitives of the search space. Every op takes and returns
// Var<T> handles and records its own backward closure on the input's tape.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "evonas/autodiff.hpp"
#include "evonas/tensor.hpp"

namespace evonas {

enum class Activation { None, ReLU, PReLU, ELU, SELU, Tanh, Sigmoid, SoftmaxChannels };
enum class Norm { None, BatchNorm, InstanceNorm, LocalResponse, SoftmaxChannels };
enum class ConnectiveKind { Concat, Add, Mul };
enum class ResizeTarget { First, Second };

inline constexpr double kNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kEluAlpha = 1.0;
inline constexpr double kSeluAlpha = 1.6732632423543772848170429916717;
inline constexpr double kSeluScale = 1.0507009873554804934193349852946;
inline constexpr double kPReluInit = 0.25;

/// Convolution geometry. Padding is always (kernel - 1) / 2; transposed
/// stride-2 convolutions use output padding 1 so they exactly double h, w.
struct ConvSpec {
  std::int64_t in_channels = 1;
  std::int64_t out_channels = 1;
  int kernel = 3;
  int stride = 1;
  bool transposed = false;
  bool separable_depthwise = false;
  bool weight_norm = false;
  bool bias = true;

  std::int64_t groups() const { return separable_depthwise ? in_channels : 1; }
  int padding() const { return (kernel - 1) / 2; }
  int output_padding() const { return (transposed && stride == 2) ? 1 : 0; }

  void check() const {
    if (kernel != 1 && kernel != 3 && kernel != 5) {
      throw ShapeError("conv kernel must be 1, 3 or 5, got " + std::to_string(kernel));
    }
    if (stride != 1 && stride != 2) {
      throw ShapeError("conv stride must be 1 or 2, got " + std::to_string(stride));
    }
    if (in_channels <= 0 || out_channels <= 0) {
      throw ShapeError("conv channel counts must be positive");
    }
    if (separable_depthwise && out_channels % in_channels != 0) {
      throw ShapeError("depthwise conv needs out_channels to be a multiple of in_channels (" +
                       std::to_string(in_channels) + " -> " + std::to_string(out_channels) + ")");
    }
  }

  /// Regular: (out, in/groups, k, k). Transposed: (in, out/groups, k, k).
  Shape weight_shape() const {
    const std::int64_t g = groups();
    if (transposed) return {in_channels, out_channels / g, kernel, kernel};
    return {out_channels, in_channels / g, kernel, kernel};
  }

  Shape3 output_shape(const Shape3& in) const {
    if (transposed) return {out_channels, in.h * stride, in.w * stride};
    return {out_channels, (in.h + stride - 1) / stride, (in.w + stride - 1) / stride};
  }
};

struct LrnParams {
  std::int64_t size = 1;
  double alpha = 1e-4;
  double beta = 0.75;
  double k = 1.0;
};

/// Running statistics owned by a batch-norm layer.
template <typename T>
struct BatchNormStats {
  Tensor<T> mean;
  Tensor<T> var;

  BatchNormStats() = default;
  explicit BatchNormStats(std::int64_t channels)
      : mean(Shape{1, channels, 1, 1}, T(0)), var(Shape{1, channels, 1, 1}, T(1)) {}
};

namespace detail {

template <typename T>
Tape<T>& tape_of(Var<T> v) {
  return *v.tape;
}

template <typename T>
void require_same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape) throw std::logic_error("vars recorded on different tapes");
}

inline std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

/// col[r][q] layout with r = (ci * k + ky) * k + kx and q = n * OH * OW + oy * OW + ox.
/// `src` is NCHW with `src_c` channels; channels [c0, c0 + cg) are gathered.
template <typename T>
void im2col(const T* src, std::int64_t batch, std::int64_t src_c, std::int64_t c0, std::int64_t cg,
            std::int64_t ih, std::int64_t iw, int k, int s, int p, std::int64_t oh, std::int64_t ow,
            std::vector<T>& col) {
  const std::int64_t q_total = batch * oh * ow;
  col.assign(static_cast<std::size_t>(cg * k * k * q_total), T(0));
  for (std::int64_t ci = 0; ci < cg; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = col.data() + ((ci * k + ky) * k + kx) * q_total;
        for (std::int64_t n = 0; n < batch; ++n) {
          const T* plane = src + ((n * src_c) + c0 + ci) * ih * iw;
          T* dst = row + n * oh * ow;
          for (std::int64_t oy = 0; oy < oh; ++oy) {
            const std::int64_t y = oy * s - p + ky;
            if (y < 0 || y >= ih) continue;
            for (std::int64_t ox = 0; ox < ow; ++ox) {
              const std::int64_t x = ox * s - p + kx;
              if (x >= 0 && x < iw) dst[oy * ow + ox] = plane[y * iw + x];
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters-adds col back into channels [c0, c0 + cg) of dst.
template <typename T>
void col2im(const std::vector<T>& col, std::int64_t batch, std::int64_t dst_c, std::int64_t c0,
            std::int64_t cg, std::int64_t ih, std::int64_t iw, int k, int s, int p, std::int64_t oh,
            std::int64_t ow, T* dst) {
  const std::int64_t q_total = batch * oh * ow;
  for (std::int64_t ci = 0; ci < cg; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = col.data() + ((ci * k + ky) * k + kx) * q_total;
        for (std::int64_t n = 0; n < batch; ++n) {
          T* plane = dst + ((n * dst_c) + c0 + ci) * ih * iw;
          const T* from = row + n * oh * ow;
          for (std::int64_t oy = 0; oy < oh; ++oy) {
            const std::int64_t y = oy * s - p + ky;
            if (y < 0 || y >= ih) continue;
            for (std::int64_t ox = 0; ox < ow; ++ox) {
              const std::int64_t x = ox * s - p + kx;
              if (x >= 0 && x < iw) plane[y * iw + x] += from[oy * ow + ox];
            }
          }
        }
      }
    }
  }
}

/// Copies channels [c0, c0 + cg) of an NCHW buffer into (cg, batch * plane) rows.
template <typename T>
void gather_rows(const T* src, std::int64_t batch, std::int64_t src_c, std::int64_t c0,
                 std::int64_t cg, std::int64_t plane, std::vector<T>& rows) {
  rows.resize(static_cast<std::size_t>(cg * batch * plane));
  for (std::int64_t ci = 0; ci < cg; ++ci) {
    for (std::int64_t n = 0; n < batch; ++n) {
      const T* from = src + ((n * src_c) + c0 + ci) * plane;
      std::copy(from, from + plane, rows.data() + (ci * batch + n) * plane);
    }
  }
}

/// Adds (cg, batch * plane) rows into channels [c0, c0 + cg) of an NCHW buffer.
template <typename T>
void scatter_add_rows(const std::vector<T>& rows, std::int64_t batch, std::int64_t dst_c,
                      std::int64_t c0, std::int64_t cg, std::int64_t plane, T* dst) {
  for (std::int64_t ci = 0; ci < cg; ++ci) {
    for (std::int64_t n = 0; n < batch; ++n) {
      T* to = dst + ((n * dst_c) + c0 + ci) * plane;
      const T* from = rows.data() + (ci * batch + n) * plane;
      for (std::int64_t i = 0; i < plane; ++i) to[i] += from[i];
    }
  }
}

/// C[m][j] += sum_r A[m][r] * B[r][j]; A is m x kdim, B is kdim x ncols.
template <typename T>
void gemm_acc(const T* a, std::int64_t lda, const T* b, T* c, std::int64_t m, std::int64_t kdim,
              std::int64_t ncols) {
  for (std::int64_t i = 0; i < m; ++i) {
    T* crow = c + i * ncols;
    for (std::int64_t r = 0; r < kdim; ++r) {
      const T av = a[i * lda + r];
      if (av == T(0)) continue;
      const T* brow = b + r * ncols;
      for (std::int64_t j = 0; j < ncols; ++j) crow[j] += av * brow[j];
    }
  }
}

/// C[r][j] += sum_m A[m][r] * B[m][j]; A is m x kdim (row stride lda), B is m x ncols.
template <typename T>
void gemm_tn_acc(const T* a, std::int64_t lda, const T* b, T* c, std::int64_t m, std::int64_t kdim,
                 std::int64_t ncols) {
  for (std::int64_t i = 0; i < m; ++i) {
    const T* brow = b + i * ncols;
    for (std::int64_t r = 0; r < kdim; ++r) {
      const T av = a[i * lda + r];
      if (av == T(0)) continue;
      T* crow = c + r * ncols;
      for (std::int64_t j = 0; j < ncols; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
T dot(const T* a, const T* b, std::int64_t n) {
  T acc[8] = {};
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

/// C[m][r] += sum_j A[m][j] * B[r][j]; A is m x ncols, B is kdim x ncols, C row stride ldc.
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::int64_t ldc, std::int64_t m, std::int64_t kdim,
                 std::int64_t ncols) {
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t r = 0; r < kdim; ++r) {
      c[i * ldc + r] += dot(a + i * ncols, b + r * ncols, ncols);
    }
  }
}

/// Adaptive pooling windows along one axis. Shrinking axes use
/// [floor(i*in/out), ceil((i+1)*in/out)); growing axes map each output index
/// to the single input floor(i*in/out).
inline std::vector<std::pair<std::int64_t, std::int64_t>> adaptive_windows(std::int64_t in,
                                                                           std::int64_t out) {
  std::vector<std::pair<std::int64_t, std::int64_t>> w(static_cast<std::size_t>(out));
  for (std::int64_t i = 0; i < out; ++i) {
    const std::int64_t start = (i * in) / out;
    std::int64_t end = ceil_div((i + 1) * in, out);
    if (out > in) end = start + 1;
    w[static_cast<std::size_t>(i)] = {start, end};
  }
  return w;
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite values in ") + what);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Convolution

template <typename T>
Var<T> conv2d(Var<T> x, const ConvSpec& spec, Var<T> weight, std::optional<Var<T>> bias = {}) {
  spec.check();
  Tape<T>& tape = detail::tape_of(x);
  detail::require_same_tape(x, weight);
  const Tensor<T>& xin = x.value();
  const Shape xs = xin.shape();
  if (xs.c != spec.in_channels) {
    throw ShapeError("conv2d expects " + std::to_string(spec.in_channels) + " input channels, got " +
                     std::to_string(xs.c));
  }
  const Tensor<T>& wv = weight.value();
  if (wv.shape() != spec.weight_shape()) {
    throw ShapeError("conv2d weight shape " + to_string(wv.shape()) + " does not match " +
                     to_string(spec.weight_shape()));
  }
  detail::check_finite(wv, "conv weights");
  if (bias) {
    detail::require_same_tape(x, *bias);
    if (bias->shape().numel() != spec.out_channels) throw ShapeError("conv2d bias length mismatch");
  }

  const Shape3 os3 = spec.output_shape(xs.per_sample());
  const Shape os{xs.n, os3.c, os3.h, os3.w};
  const std::int64_t groups = spec.groups();
  const std::int64_t cin_g = spec.in_channels / groups;
  const std::int64_t cout_g = spec.out_channels / groups;
  const int k = spec.kernel, s = spec.stride, p = spec.padding();
  const std::int64_t kk = static_cast<std::int64_t>(k) * k;
  const std::int64_t batch = xs.n;

  Tensor<T> out(os);
  std::vector<T> col, rows;
  if (!spec.transposed) {
    const std::int64_t q = batch * os.h * os.w;
    for (std::int64_t g = 0; g < groups; ++g) {
      detail::im2col(xin.data(), batch, xs.c, g * cin_g, cin_g, xs.h, xs.w, k, s, p, os.h, os.w, col);
      rows.assign(static_cast<std::size_t>(cout_g * q), T(0));
      detail::gemm_acc(wv.data() + g * cout_g * cin_g * kk, cin_g * kk, col.data(), rows.data(), cout_g,
                       cin_g * kk, q);
      detail::scatter_add_rows(rows, batch, os.c, g * cout_g, cout_g, os.h * os.w, out.data());
    }
  } else {
    const std::int64_t q = batch * xs.h * xs.w;
    for (std::int64_t g = 0; g < groups; ++g) {
      detail::gather_rows(xin.data(), batch, xs.c, g * cin_g, cin_g, xs.h * xs.w, rows);
      col.assign(static_cast<std::size_t>(cout_g * kk * q), T(0));
      detail::gemm_tn_acc(wv.data() + g * cin_g * cout_g * kk, cout_g * kk, rows.data(), col.data(), cin_g,
                          cout_g * kk, q);
      detail::col2im(col, batch, os.c, g * cout_g, cout_g, os.h, os.w, k, s, p, xs.h, xs.w, out.data());
    }
  }
  if (bias) {
    const Tensor<T>& bv = bias->value();
    for (std::int64_t n = 0; n < batch; ++n)
      for (std::int64_t c = 0; c < os.c; ++c) {
        T* plane = out.data() + (n * os.c + c) * os.h * os.w;
        for (std::int64_t i = 0; i < os.h * os.w; ++i) plane[i] += bv[c];
      }
  }

  const bool rg = x.requires_grad() || weight.requires_grad() || (bias && bias->requires_grad());
  auto back = [x, weight, bias, spec, xs, os, groups, cin_g, cout_g, k, s, p, kk, batch](
                  Var<T> self, Tape<T>& t) {
    const Tensor<T>& gout = t.grad(self);
    const Tensor<T>& xin = t.value(x);
    const Tensor<T>& wv = t.value(weight);
    const bool need_x = t.requires_grad(x);
    const bool need_w = t.requires_grad(weight);
    std::vector<T> col, rows, dcol;
    if (!spec.transposed) {
      const std::int64_t q = batch * os.h * os.w;
      for (std::int64_t g = 0; g < groups; ++g) {
        detail::gather_rows(gout.data(), batch, os.c, g * cout_g, cout_g, os.h * os.w, rows);
        if (need_w) {
          detail::im2col(xin.data(), batch, xs.c, g * cin_g, cin_g, xs.h, xs.w, k, s, p, os.h, os.w, col);
          Tensor<T>& gw = t.grad(weight);
          detail::gemm_nt_acc(rows.data(), col.data(), gw.data() + g * cout_g * cin_g * kk, cin_g * kk,
                              cout_g, cin_g * kk, q);
        }
        if (need_x) {
          dcol.assign(static_cast<std::size_t>(cin_g * kk * q), T(0));
          detail::gemm_tn_acc(wv.data() + g * cout_g * cin_g * kk, cin_g * kk, rows.data(), dcol.data(),
                              cout_g, cin_g * kk, q);
          detail::col2im(dcol, batch, xs.c, g * cin_g, cin_g, xs.h, xs.w, k, s, p, os.h, os.w,
                         t.grad(x).data());
        }
      }
    } else {
      const std::int64_t q = batch * xs.h * xs.w;
      for (std::int64_t g = 0; g < groups; ++g) {
        detail::im2col(gout.data(), batch, os.c, g * cout_g, cout_g, os.h, os.w, k, s, p, xs.h, xs.w, dcol);
        if (need_x) {
          rows.assign(static_cast<std::size_t>(cin_g * q), T(0));
          detail::gemm_acc(wv.data() + g * cin_g * cout_g * kk, cout_g * kk, dcol.data(), rows.data(), cin_g,
                           cout_g * kk, q);
          detail::scatter_add_rows(rows, batch, xs.c, g * cin_g, cin_g, xs.h * xs.w, t.grad(x).data());
        }
        if (need_w) {
          detail::gather_rows(xin.data(), batch, xs.c, g * cin_g, cin_g, xs.h * xs.w, rows);
          Tensor<T>& gw = t.grad(weight);
          detail::gemm_nt_acc(rows.data(), dcol.data(), gw.data() + g * cin_g * cout_g * kk, cout_g * kk,
                              cin_g, cout_g * kk, q);
        }
      }
    }
    if (bias && t.requires_grad(*bias)) {
      Tensor<T>& gb = t.grad(*bias);
      for (std::int64_t n = 0; n < batch; ++n)
        for (std::int64_t c = 0; c < os.c; ++c) {
          const T* plane = gout.data() + (n * os.c + c) * os.h * os.w;
          T acc = 0;
          for (std::int64_t i = 0; i < os.h * os.w; ++i) acc += plane[i];
          gb[c] += acc;
        }
    }
  };
  const std::size_t self_id = tape.size();
  return tape.record(std::move(out), rg,
                     [back, self_id](Tape<T>& t) { back(Var<T>{&t, self_id}, t); });
}

/// Weight normalization: w[i] = g[i] * v[i] / ||v[i]|| over each leading-axis slice.
template <typename T>
Var<T> weight_norm(Var<T> v, Var<T> g) {
  Tape<T>& tape = detail::tape_of(v);
  detail::require_same_tape(v, g);
  const Tensor<T>& vv = v.value();
  const Tensor<T>& gv = g.value();
  const std::int64_t rows = vv.shape().n;
  if (gv.numel() != rows) throw ShapeError("weight_norm gain length must match leading axis");
  const std::int64_t len = rows == 0 ? 0 : vv.numel() / rows;
  std::vector<T> norms(static_cast<std::size_t>(rows));
  Tensor<T> out(vv.shape());
  for (std::int64_t i = 0; i < rows; ++i) {
    T ss = 0;
    for (std::int64_t j = 0; j < len; ++j) ss += vv[i * len + j] * vv[i * len + j];
    const T nrm = std::sqrt(ss);
    if (!(nrm > T(0)) || !std::isfinite(nrm)) throw NumericError("weight_norm of a zero or non-finite filter");
    norms[static_cast<std::size_t>(i)] = nrm;
    for (std::int64_t j = 0; j < len; ++j) out[i * len + j] = gv[i] * vv[i * len + j] / nrm;
  }
  const std::size_t self_id = tape.size();
  return tape.record(std::move(out), v.requires_grad() || g.requires_grad(),
                     [v, g, norms, rows, len, self_id](Tape<T>& t) {
                       const Tensor<T>& go = t.grad(Var<T>{&t, self_id});
                       const Tensor<T>& vv = t.value(v);
                       const Tensor<T>& gv = t.value(g);
                       for (std::int64_t i = 0; i < rows; ++i) {
                         const T nrm = norms[static_cast<std::size_t>(i)];
                         T proj = 0;
                         for (std::int64_t j = 0; j < len; ++j) proj += go[i * len + j] * vv[i * len + j] / nrm;
                         if (t.requires_grad(g)) t.grad(g)[i] += proj;
                         if (t.requires_grad(v)) {
                           Tensor<T>& gvv = t.grad(v);
                           for (std::int64_t j = 0; j < len; ++j) {
                             gvv[i * len + j] += gv[i] / nrm * (go[i * len + j] - vv[i * len + j] / nrm * proj);
                           }
                         }
                       }
                     });
}

// ---------------------------------------------------------------------------
// Elementwise activations

namespace detail {

template <typename T, typename Fwd, typename Deriv>
Var<T> unary(Var<T> x, Fwd fwd, Deriv deriv) {
  Tape<T>& tape = tape_of(x);
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::int64_t i = 0; i < xv.numel(); ++i) out[i] = fwd(xv[i]);
  const std::size_t self_id = tape.size();
  return tape.record(std::move(out), x.requires_grad(), [x, deriv, self_id](Tape<T>& t) {
    const Var<T> self{&t, self_id};
    const Tensor<T>& go = t.grad(self);
    const Tensor<T>& xv = t.value(x);
    const Tensor<T>& yv = t.value(self);
    Tensor<T>& gx = t.grad(x);
    for (std::int64_t i = 0; i < xv.numel(); ++i) gx[i] += go[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace detail

template <typename T>
Var<T> relu(Var<T> x) {
  return detail::unary(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> elu(Var<T> x, T alpha = T(kEluAlpha)) {
  return detail::unary(
      x, [alpha](T v) { return v > T(0) ? v : alpha * std::expm1(v); },
      [alpha](T v, T y) { return v > T(0) ? T(1) : y + alpha; });
}

template <typename T>
Var<T> selu(Var<T> x) {
  const T a = T(kSeluAlpha), sc = T(kSeluScale);
  return detail::unary(
      x, [a, sc](T v) { return v > T(0) ? sc * v : sc * a * std::expm1(v); },
      [a, sc](T v, T y) { return v > T(0) ? sc : y + sc * a; });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  return detail::unary(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  return detail::unary(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        const T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

/// PReLU with a single learnable slope shared by all channels.
template <typename T>
Var<T> prelu(Var<T> x, Var<T> slope) {
  Tape<T>& tape = detail::tape_of(x);
  detail::require_same_tape(x, slope);
  if (slope.value().numel() != 1) throw ShapeError("prelu expects a single slope parameter");
  const T a = slope.value()[0];
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::int64_t i = 0; i < xv.numel(); ++i) out[i] = xv[i] > T(0) ? xv[i] : a * xv[i];
  const std::size_t self_id = tape.size();
  return tape.record(std::move(out), x.requires_grad() || slope.requires_grad(),
                     [x, slope, self_id](Tape<T>& t) {
                       const Tensor<T>& go = t.grad(Var<T>{&t, self_id});
                       const Tensor<T>& xv = t.value(x);
                       const T a = t.value(slope)[0];
                       T ga = 0;
                       const bool need_x = t.requires_grad(x);
                       for (std::int64_t i = 0; i < xv.numel(); ++i) {
                         if (xv[i] > T(0)) {
                           if (need_x) t.grad(x)[i] += go[i];
                         } else {
                           if (need_x) t.grad(x)[i] += a * go[i];
                           ga += xv[i] * go[i];
                         }
                       }
                       if (t.requires_grad(slope)) t.grad(slope)[0] += ga;
                     });
}

/// Softmax across the channel axis, independently at every pixel.
template <typename T>
Var<T> softmax_channels(Var<T> x) {
  Tape<T>& tape = detail::tape_of(x);
  const Tensor<T>& xv = x.value();
  const Shape s = xv.shape();
  const std::int64_t plane = s.plane();
  Tensor<T> out(s);
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t i = 0; i < plane; ++i) {
      T mx = -std::numeric_limits<T>::infinity();
      for (std::int64_t c = 0; c < s.c; ++c) mx = std::max(mx, xv[(n * s.c + c) * plane + i]);
      T sum = 0;
      for (std::int64_t c = 0; c < s.c; ++c) {
        const T e = std::exp(xv[(n * s.c + c) * plane + i] - mx);
        out[(n * s.c + c) * plane + i] = e;
        sum += e;
      }
      for (std::int64_t c = 0; c < s.c; ++c) out[(n * s.c + c) * plane + i] /= sum;
    }
  }
  const std::size_t self_id = tape.size();
  return tape.record(std::move(out), x.requires_grad(), [x, s, plane, self_id](Tape<T>& t) {
    const Var<T> self{&t, self_id};
    const Tensor<T>& go = t.grad(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& gx = t.grad(x);
    for (std::int64_t n = 0; n < s.n; ++n) {
      for (std::int64_t i = 0; i < plane; ++i) {
        T d = 0;
        for (std::int64_t c = 0; c < s.c; ++c) {
          const std::int64_t o = (n * s.c + c) * plane + i;
          d += go[o] * y[o];
        }
        for (std::int64_t c = 0; c < s.c; ++c) {
          const std::int64_t o = (n * s.c + c) * plane + i;
          gx[o] += y[o] * (go[o] - d);
        }
      }
    }
  });
}

/// Dispatches an activation kind. `slope` is required for PReLU only.
template <typename T>
Var<T> activation(Var<T> x, Activation kind, std::optional<Var<T>> slope = {}) {
  switch (kind) {
    case Activation::None:
      return x;
    case Activation::ReLU:
      return relu(x);
    case Activation::PReLU:
      if (!slope) throw std::invalid_argument("PReLU needs a slope parameter");
      return prelu(x, *slope);
    case Activation::ELU:
      return elu(x);
    case Activation::SELU:
      return selu(x);
    case Activation::Tanh:
      return evonas::tanh(x);
    case Activation::Sigmoid:
      return sigmoid(x);
    case Activation::SoftmaxChannels:
      return softmax_channels(x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Normalization

namespace detail {

/// Normalizes groups of elements to zero mean / unit variance. `group_of`
/// maps (n, c) to a group id; each group spans whole planes.
template <typename T>
struct NormGroups {
  std::int64_t count = 0;
  std::vector<std::int64_t> members;  // per (n, c) plane, the group id
};

template <typename T>
Var<T> normalize_groups(Var<T> x, const NormGroups<T>& groups, std::optional<Var<T>> gamma,
                        std::optional<Var<T>> beta, std::vector<T>* group_mean = nullptr,
                        std::vector<T>* group_var = nullptr) {
  Tape<T>& tape = tape_of(x);
  const Tensor<T>& xv = x.value();
  const Shape s = xv.shape();
  const std::int64_t plane = s.plane();
  const std::int64_t g = groups.count;
  // Sums run in double around a per-group pivot (its first element), so a
  // constant group has an exactly zero centered value.
  std::vector<T> mean(static_cast<std::size_t>(g), T(0)), var(static_cast<std::size_t>(g), T(0));
  std::vector<double> pivot(static_cast<std::size_t>(g), 0.0), shifted(static_cast<std::size_t>(g), 0.0);
  std::vector<bool> seen(static_cast<std::size_t>(g), false);
  std::vector<std::int64_t> m(static_cast<std::size_t>(g), 0);
  for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
    const auto gid = static_cast<std::size_t>(groups.members[static_cast<std::size_t>(nc)]);
    const T* p = xv.data() + nc * plane;
    if (!seen[gid] && plane > 0) {
      pivot[gid] = static_cast<double>(p[0]);
      seen[gid] = true;
    }
    double acc = 0;
    for (std::int64_t i = 0; i < plane; ++i) acc += static_cast<double>(p[i]) - pivot[gid];
    shifted[gid] += acc;
    m[gid] += plane;
  }
  for (std::size_t i = 0; i < static_cast<std::size_t>(g); ++i) {
    mean[i] = m[i] > 0 ? static_cast<T>(pivot[i] + shifted[i] / static_cast<double>(m[i])) : T(0);
  }
  std::vector<double> sq(static_cast<std::size_t>(g), 0.0);
  for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
    const auto gid = static_cast<std::size_t>(groups.members[static_cast<std::size_t>(nc)]);
    const double mu = static_cast<double>(mean[gid]);
    const T* p = xv.data() + nc * plane;
    double acc = 0;
    for (std::int64_t i = 0; i < plane; ++i) {
      const double d = static_cast<double>(p[i]) - mu;
      acc += d * d;
    }
    sq[gid] += acc;
  }
  std::vector<T> inv_std(static_cast<std::size_t>(g));
  for (std::int64_t i = 0; i < g; ++i) {
    const auto u = static_cast<std::size_t>(i);
    var[u] = m[u] > 0 ? static_cast<T>(sq[u] / static_cast<double>(m[u])) : T(0);
    inv_std[u] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var[u]) + kNormEps));
  }
  Tensor<T> xhat(s);
  Tensor<T> out(s);
  for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
    const auto gid = static_cast<std::size_t>(groups.members[static_cast<std::size_t>(nc)]);
    const std::int64_t c = nc % s.c;
    const T gm = gamma ? gamma->value()[c] : T(1);
    const T bt = beta ? beta->value()[c] : T(0);
    for (std::int64_t i = 0; i < plane; ++i) {
      const T h = (xv[nc * plane + i] - mean[gid]) * inv_std[gid];
      xhat[nc * plane + i] = h;
      out[nc * plane + i] = gm * h + bt;
    }
  }
  if (group_mean) *group_mean = mean;
  if (group_var) *group_var = var;
  const bool rg = x.requires_grad() || (gamma && gamma->requires_grad()) || (beta && beta->requires_grad());
  const std::size_t self_id = tape.size();
  return tape.record(std::move(out), rg,
                     [x, groups, gamma, beta, xhat = std::move(xhat), inv_std, m, s, plane, self_id](Tape<T>& t) {
                       const Tensor<T>& go = t.grad(Var<T>{&t, self_id});
                       const std::int64_t gcount = groups.count;
                       std::vector<T> sum_d(static_cast<std::size_t>(gcount), T(0));
                       std::vector<T> sum_dh(static_cast<std::size_t>(gcount), T(0));
                       const bool need_gamma = gamma && t.requires_grad(*gamma);
                       const bool need_beta = beta && t.requires_grad(*beta);
                       for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
                         const auto gid = static_cast<std::size_t>(groups.members[static_cast<std::size_t>(nc)]);
                         const std::int64_t c = nc % s.c;
                         const T gm = gamma ? t.value(*gamma)[c] : T(1);
                         T sg = 0, sgh = 0;
                         for (std::int64_t i = 0; i < plane; ++i) {
                           const T gv = go[nc * plane + i];
                           sg += gv;
                           sgh += gv * xhat[nc * plane + i];
                         }
                         sum_d[gid] += gm * sg;
                         sum_dh[gid] += gm * sgh;
                         if (need_gamma) t.grad(*gamma)[c] += sgh;
                         if (need_beta) t.grad(*beta)[c] += sg;
                       }
                       if (!t.requires_grad(x)) return;
                       Tensor<T>& gx = t.grad(x);
                       for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
                         const auto gid = static_cast<std::size_t>(groups.members[static_cast<std::size_t>(nc)]);
                         const std::int64_t c = nc % s.c;
                         const T gm = gamma ? t.value(*gamma)[c] : T(1);
                         const T mm = T(m[gid]);
                         for (std::int64_t i = 0; i < plane; ++i) {
                           const T dh = go[nc * plane + i] * gm;
                           gx[nc * plane + i] +=
                               inv_std[gid] / mm * (mm * dh - sum_d[gid] - xhat[nc * plane + i] * sum_dh[gid]);
                         }
                       }
                     });
}

}  // namespace detail

/// Batch normalization over (batch, h, w) per channel. In training mode the
/// batch statistics are used and `stats` is updated with momentum 0.1
/// (unbiased variance); otherwise `stats` is used as a fixed affine map.
template <typename T>
Var<T> batch_norm(Var<T> x, std::optional<Var<T>> gamma, std::optional<Var<T>> beta,
                  BatchNormStats<T>* stats, bool training) {
  const Shape s = x.shape();
  if (gamma && gamma->value().numel() != s.c) throw ShapeError("batch_norm scale length mismatch");
  if (beta && beta->value().numel() != s.c) throw ShapeError("batch_norm shift length mismatch");
  if (training) {
    detail::NormGroups<T> groups;
    groups.count = s.c;
    groups.members.resize(static_cast<std::size_t>(s.n * s.c));
    for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) groups.members[static_cast<std::size_t>(nc)] = nc % s.c;
    std::vector<T> mean, var;
    Var<T> y = detail::normalize_groups(x, groups, gamma, beta, &mean, &var);
    if (stats) {
      if (stats->mean.numel() != s.c) *stats = BatchNormStats<T>(s.c);
      const T mom = T(kBatchNormMomentum);
      const std::int64_t cnt = s.n * s.plane();
      for (std::int64_t c = 0; c < s.c; ++c) {
        const auto u = static_cast<std::size_t>(c);
        const T unbiased = cnt > 1 ? var[u] * T(cnt) / T(cnt - 1) : var[u];
        stats->mean[c] = (T(1) - mom) * stats->mean[c] + mom * mean[u];
        stats->var[c] = (T(1) - mom) * stats->var[c] + mom * unbiased;
      }
    }
    return y;
  }
  if (!stats || stats->mean.numel() != s.c) throw ShapeError("batch_norm inference needs running stats");
  Tape<T>& tape = detail::tape_of(x);
  const Tensor<T>& xv = x.value();
  const std::int64_t plane = s.plane();
  std::vector<T> scale(static_cast<std::size_t>(s.c)), shift(static_cast<std::size_t>(s.c));
  for (std::int64_t c = 0; c < s.c; ++c) {
    const T inv = T(1) / std::sqrt(stats->var[c] + T(kNormEps));
    const T gm = gamma ? gamma->value()[c] : T(1);
    const T bt = beta ? beta->value()[c] : T(0);
    scale[static_cast<std::size_t>(c)] = gm * inv;
    shift[static_cast<std::size_t>(c)] = bt - gm * inv * stats->mean[c];
  }
  Tensor<T> out(s);
  for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
    const auto c = static_cast<std::size_t>(nc % s.c);
    for (std::int64_t i = 0; i < plane; ++i) out[nc * plane + i] = scale[c] * xv[nc * plane + i] + shift[c];
  }
  const Tensor<T> rmean = stats->mean, rvar = stats->var;
  const std::size_t self_id = tape.size();
  const bool rg = x.requires_grad() || (gamma && gamma->requires_grad()) || (beta && beta->requires_grad());
  return tape.record(std::move(out), rg, [x, gamma, beta, rmean, rvar, s, plane, self_id](Tape<T>& t) {
    const Tensor<T>& go = t.grad(Var<T>{&t, self_id});
    const Tensor<T>& xv = t.value(x);
    for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
      const std::int64_t c = nc % s.c;
      const T inv = T(1) / std::sqrt(rvar[c] + T(kNormEps));
      const T gm = gamma ? t.value(*gamma)[c] : T(1);
      T sg = 0, sgh = 0;
      for (std::int64_t i = 0; i < plane; ++i) {
        const T g = go[nc * plane + i];
        sg += g;
        sgh += g * (xv[nc * plane + i] - rmean[c]) * inv;
        if (t.requires_grad(x)) t.grad(x)[nc * plane + i] += g * gm * inv;
      }
      if (gamma && t.requires_grad(*gamma)) t.grad(*gamma)[c] += sgh;
      if (beta && t.requires_grad(*beta)) t.grad(*beta)[c] += sg;
    }
  });
}

/// Instance normalization per (sample, channel) plane, no affine parameters.
template <typename T>
Var<T> instance_norm(Var<T> x) {
  const Shape s = x.shape();
  detail::NormGroups<T> groups;
  groups.count = s.n * s.c;
  groups.members.resize(static_cast<std::size_t>(s.n * s.c));
  for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) groups.members[static_cast<std::size_t>(nc)] = nc;
  return detail::normalize_groups<T>(x, groups, std::nullopt, std::nullopt);
}

/// Local response normalization across channels:
/// y_c = x_c / (k + alpha/size * sum_{j in W(c)} x_j^2)^beta with
/// W(c) = [c - size/2, c + (size-1)/2] clipped to valid channels.
template <typename T>
Var<T> local_response_norm(Var<T> x, const LrnParams& prm) {
  Tape<T>& tape = detail::tape_of(x);
  const Tensor<T>& xv = x.value();
  const Shape s = xv.shape();
  const std::int64_t plane = s.plane();
  const std::int64_t size = std::max<std::int64_t>(prm.size, 1);
  const std::int64_t lo = size / 2, hi = (size - 1) / 2;
  const T alpha = T(prm.alpha), beta = T(prm.beta), kconst = T(prm.k);
  Tensor<T> denom(s);  // D_c
  Tensor<T> out(s);
  for (std::int64_t n = 0; n < s.n; ++n) {
    for (std::int64_t c = 0; c < s.c; ++c) {
      const std::int64_t j0 = std::max<std::int64_t>(0, c - lo), j1 = std::min<std::int64_t>(s.c - 1, c + hi);
      for (std::int64_t i = 0; i < plane; ++i) {
        T ss = 0;
        for (std::int64_t j = j0; j <= j1; ++j) {
          const T v = xv[(n * s.c + j) * plane + i];
          ss += v * v;
        }
        const std::int64_t o = (n * s.c + c) * plane + i;
        const T d = kconst + alpha / T(size) * ss;
        denom[o] = d;
        out[o] = xv[o] * std::pow(d, -beta);
      }
    }
  }
  const std::size_t self_id = tape.size();
  return tape.record(std::move(out), x.requires_grad(),
                     [x, s, plane, size, lo, hi, alpha, beta, denom = std::move(denom), self_id](Tape<T>& t) {
                       const Tensor<T>& go = t.grad(Var<T>{&t, self_id});
                       const Tensor<T>& xv = t.value(x);
                       Tensor<T>& gx = t.grad(x);
                       const T coef = T(2) * alpha * beta / T(size);
                       for (std::int64_t n = 0; n < s.n; ++n) {
                         for (std::int64_t i = 0; i < plane; ++i) {
                           for (std::int64_t j = 0; j < s.c; ++j) {
                             const std::int64_t oj = (n * s.c + j) * plane + i;
                             // channels c whose window contains j
                             const std::int64_t c0 = std::max<std::int64_t>(0, j - hi);
                             const std::int64_t c1 = std::min<std::int64_t>(s.c - 1, j + lo);
                             T acc = 0;
                             for (std::int64_t c = c0; c <= c1; ++c) {
                               const std::int64_t oc = (n * s.c + c) * plane + i;
                               acc += go[oc] * xv[oc] * std::pow(denom[oc], -beta - T(1));
                             }
                             gx[oj] += go[oj] * std::pow(denom[oj], -beta) - coef * xv[oj] * acc;
                           }
                         }
                       }
                     });
}

/// Parameters and state consumed by `normalize`.
template <typename T>
struct NormInputs {
  std::optional<Var<T>> gamma;
  std::optional<Var<T>> beta;
  BatchNormStats<T>* stats = nullptr;
};

template <typename T>
Var<T> normalize(Var<T> x, Norm kind, const NormInputs<T>& in, bool training) {
  switch (kind) {
    case Norm::None:
      return x;
    case Norm::BatchNorm:
      return batch_norm(x, in.gamma, in.beta, in.stats, training);
    case Norm::InstanceNorm:
      return instance_norm(x);
    case Norm::LocalResponse:
      return local_response_norm(x, LrnParams{x.shape().c, 1e-4, 0.75, 1.0});
    case Norm::SoftmaxChannels:
      return softmax_channels(x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Resolution changes

template <typename T>
Var<T> max_pool_2x2(Var<T> x) {
  Tape<T>& tape = detail::tape_of(x);
  const Tensor<T>& xv = x.value();
  const Shape s = xv.shape();
  if (s.h < 2 || s.w < 2) throw ShapeError("max_pool_2x2 needs h, w >= 2, got " + to_string(s));
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  Tensor<T> out(os);
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(os.numel()));
  for (std::int64_t nc = 0; nc < s.n * s.c; ++nc) {
    for (std::int64_t oy = 0; oy < os.h; ++oy) {
      for (std::int64_t ox = 0; ox < os.w; ++ox) {
        std::int64_t best = nc * s.plane() + (2 * oy) * s.w + 2 * ox;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::int64_t idx = nc * s.plane() + (2 * oy + dy) * s.w + (2 * ox + dx);
            if (xv[idx] > xv[best]) best = idx;
          }
        const std::int64_t o = nc * os.plane() + oy * os.w + ox;
        out[o] = xv[best];
        argmax[static_cast<std::size_t>(o)] = best;
      }
    }
  }
  const std::size_t self_id = tape.size();
  return tape.record(std::move(out), x.requires_grad(), [x, argmax = std::move(argmax), self_id](Tape<T>& t) {
    const Tensor<T>& go = t.grad(Var<T>{&t, self_id});
    Tensor<T>& gx = t.grad(x);
    for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += go[static_cast<std::int64_t>(o)];
  });
}

template <typename T>
Var<T> upsample_nn_2x(Var<T> x) {
  Tape<T>& tape = detail::tape_of(x);
  const Tensor<T>& xv = x.value();
  const Shape s = xv.shape();
  const Shape os{s.n, s.c, s.h * 2, s.w * 2};
  Tensor<T> out(os);
  for (std::int64_t nc = 0; nc < s.n * s.c; ++nc)
    for (std::int64_t y = 0; y < os.h; ++y)
      for (std::int64_t xx = 0; xx < os.w; ++xx)
        out[nc * os.plane() + y * os.w + xx] = xv[nc * s.plane() + (y / 2) * s.w + xx / 2];
  const std::size_t self_id = tape.size();
  return tape.record(std::move(out), x.requires_grad(), [x, s, os, self_id](Tape<T>& t) {
    const Tensor<T>& go = t.grad(Var<T>{&t, self_id});
    Tensor<T>& gx = t.grad(x);
    for (std::int64_t nc = 0; nc < s.n * s.c; ++nc)
      for (std::int64_t y = 0; y < os.h; ++y)
        for (std::int64_t xx = 0; xx < os.w; ++xx)
          gx[nc * s.plane() + (y / 2) * s.w + xx / 2] += go[nc * os.plane() + y * os.w + xx];
  });
}

/// Adaptive average pooling over (channels, height, width) to `target`.
template <typename T>
Var<T> adaptive_avg_pool3d(Var<T> x, Shape3 target) {
  if (target.c <= 0 || target.h <= 0 || target.w <= 0) {
    throw ShapeError("adaptive pooling target must be positive, got " + to_string(target));
  }
  const Shape s = x.shape();
  if (s.per_sample() == target) return x;
  if (s.c <= 0 || s.h <= 0 || s.w <= 0) throw ShapeError("adaptive pooling of an empty tensor");
  Tape<T>& tape = detail::tape_of(x);
  const Tensor<T>& xv = x.value();
  const auto wc = detail::adaptive_windows(s.c, target.c);
  const auto wh = detail::adaptive_windows(s.h, target.h);
  const auto ww = detail::adaptive_windows(s.w, target.w);
  const Shape os{s.n, target.c, target.h, target.w};
  Tensor<T> out(os);
  for (std::int64_t n = 0; n < s.n; ++n)
    for (std::int64_t c = 0; c < os.c; ++c)
      for (std::int64_t y = 0; y < os.h; ++y)
        for (std::int64_t xx = 0; xx < os.w; ++xx) {
          const auto [c0, c1] = wc[static_cast<std::size_t>(c)];
          const auto [y0, y1] = wh[static_cast<std::size_t>(y)];
          const auto [x0, x1] = ww[static_cast<std::size_t>(xx)];
          T acc = 0;
          for (std::int64_t ic = c0; ic < c1; ++ic)
            for (std::int64_t iy = y0; iy < y1; ++iy)
              for (std::int64_t ix = x0; ix < x1; ++ix) acc += xv.at(n, ic, iy, ix);
          out.at(n, c, y, xx) = acc / T((c1 - c0) * (y1 - y0) * (x1 - x0));
        }
  const std::size_t self_id = tape.size();
  return tape.record(std::move(out), x.requires_grad(), [x, wc, wh, ww, os, self_id](Tape<T>& t) {
    const Tensor<T>& go = t.grad(Var<T>{&t, self_id});
    Tensor<T>& gx = t.grad(x);
    for (std::int64_t n = 0; n < os.n; ++n)
      for (std::int64_t c = 0; c < os.c; ++c)
        for (std::int64_t y = 0; y < os.h; ++y)
          for (std::int64_t xx = 0; xx < os.w; ++xx) {
            const auto [c0, c1] = wc[static_cast<std::size_t>(c)];
            const auto [y0, y1] = wh[static_cast<std::size_t>(y)];
            const auto [x0, x1] = ww[static_cast<std::size_t>(xx)];
            const T g = go.at(n, c, y, xx) / T((c1 - c0) * (y1 - y0) * (x1 - x0));
            for (std::int64_t ic = c0; ic < c1; ++ic)
              for (std::int64_t iy = y0; iy < y1; ++iy)
                for (std::int64_t ix = x0; ix < x1; ++ix) gx.at(n, ic, iy, ix) += g;
          }
  });
}

// ---------------------------------------------------------------------------
// Connectives

template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  Tape<T>& tape = detail::tape_of(a);
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw ShapeError("concat needs matching batch and spatial dims: " + to_string(sa) + " vs " + to_string(sb));
  }
  const Shape os{sa.n, sa.c + sb.c, sa.h, sa.w};
  Tensor<T> out(os);
  const std::int64_t plane = sa.plane();
  for (std::int64_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().data() + n * sa.c * plane, sa.c * plane, out.data() + n * os.c * plane);
    std::copy_n(b.value().data() + n * sb.c * plane, sb.c * plane, out.data() + (n * os.c + sa.c) * plane);
  }
  const std::size_t self_id = tape.size();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [a, b, sa, sb, os, plane, self_id](Tape<T>& t) {
                       const Tensor<T>& go = t.grad(Var<T>{&t, self_id});
                       for (std::int64_t n = 0; n < sa.n; ++n) {
                         if (t.requires_grad(a)) {
                           T* ga = t.grad(a).data() + n * sa.c * plane;
                           const T* src = go.data() + n * os.c * plane;
                           for (std::int64_t i = 0; i < sa.c * plane; ++i) ga[i] += src[i];
                         }
                         if (t.requires_grad(b)) {
                           T* gb = t.grad(b).data() + n * sb.c * plane;
                           const T* src = go.data() + (n * os.c + sa.c) * plane;
                           for (std::int64_t i = 0; i < sb.c * plane; ++i) gb[i] += src[i];
                         }
                       }
                     });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  if (a.shape() != b.shape()) throw ShapeError("add shape mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tape<T>& tape = detail::tape_of(a);
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  const std::size_t self_id = tape.size();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(), [a, b, self_id](Tape<T>& t) {
    const Tensor<T>& go = t.grad(Var<T>{&t, self_id});
    if (t.requires_grad(a)) {
      Tensor<T>& g = t.grad(a);
      for (std::int64_t i = 0; i < go.numel(); ++i) g[i] += go[i];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& g = t.grad(b);
      for (std::int64_t i = 0; i < go.numel(); ++i) g[i] += go[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require_same_tape(a, b);
  if (a.shape() != b.shape()) throw ShapeError("mul shape mismatch: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  Tape<T>& tape = detail::tape_of(a);
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  const std::size_t self_id = tape.size();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(), [a, b, self_id](Tape<T>& t) {
    const Tensor<T>& go = t.grad(Var<T>{&t, self_id});
    const Tensor<T>& av = t.value(a);
    const Tensor<T>& bv = t.value(b);
    if (t.requires_grad(a)) {
      Tensor<T>& g = t.grad(a);
      for (std::int64_t i = 0; i < go.numel(); ++i) g[i] += go[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& g = t.grad(b);
      for (std::int64_t i = 0; i < go.numel(); ++i) g[i] += go[i] * av[i];
    }
  });
}

/// Shape the non-target input is coerced to before a connective is applied.
inline Shape3 coercion_target(ConnectiveKind kind, const Shape3& target, const Shape3& other) {
  if (kind == ConnectiveKind::Concat) return {other.c, target.h, target.w};
  return target;
}

inline Shape3 connective_output_shape(ConnectiveKind kind, const Shape3& a, const Shape3& b, ResizeTarget rt) {
  const Shape3& target = rt == ResizeTarget::First ? a : b;
  if (kind == ConnectiveKind::Concat) {
    return {a.c + b.c, target.h, target.w};
  }
  return target;
}

/// Joins two inputs, coercing the non-target one with adaptive pooling.
/// Concat only coerces (h, w) and stacks channels as [a, b].
template <typename T>
Var<T> connective(ConnectiveKind kind, Var<T> a, Var<T> b, ResizeTarget rt) {
  const Shape3 sa = a.shape().per_sample(), sb = b.shape().per_sample();
  if (rt == ResizeTarget::First) {
    b = adaptive_avg_pool3d(b, coercion_target(kind, sa, sb));
  } else {
    a = adaptive_avg_pool3d(a, coercion_target(kind, sb, sa));
  }
  switch (kind) {
    case ConnectiveKind::Concat:
      return concat_channels(a, b);
    case ConnectiveKind::Add:
      return add(a, b);
    case ConnectiveKind::Mul:
      return mul(a, b);
  }
  return a;
}

// ---------------------------------------------------------------------------
// Reductions and loss

template <typename T>
Var<T> sum(Var<T> x) {
  Tape<T>& tape = detail::tape_of(x);
  T acc = 0;
  for (std::int64_t i = 0; i < x.value().numel(); ++i) acc += x.value()[i];
  const std::size_t self_id = tape.size();
  return tape.record(Tensor<T>(Shape{1, 1, 1, 1}, acc), x.requires_grad(), [x, self_id](Tape<T>& t) {
    const T g = t.grad(Var<T>{&t, self_id})[0];
    Tensor<T>& gx = t.grad(x);
    for (std::int64_t i = 0; i < gx.numel(); ++i) gx[i] += g;
  });
}

/// Mean squared error over every element; returns a (1,1,1,1) scalar.
template <typename T>
Var<T> mse_loss(Var<T> pred, Var<T> target) {
  detail::require_same_tape(pred, target);
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss shape mismatch: " + to_string(pred.shape()) + " vs " + to_string(target.shape()));
  }
  Tape<T>& tape = detail::tape_of(pred);
  const Tensor<T>& p = pred.value();
  const Tensor<T>& q = target.value();
  const std::int64_t count = p.numel();
  double acc = 0;
  for (std::int64_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
    acc += d * d;
  }
  const T loss = count > 0 ? static_cast<T>(acc / static_cast<double>(count)) : T(0);
  const std::size_t self_id = tape.size();
  return tape.record(Tensor<T>(Shape{1, 1, 1, 1}, loss), pred.requires_grad() || target.requires_grad(),
                     [pred, target, count, self_id](Tape<T>& t) {
                       const T g = t.grad(Var<T>{&t, self_id})[0];
                       const Tensor<T>& p = t.value(pred);
                       const Tensor<T>& q = t.value(target);
                       const T scale = T(2) * g / T(count);
                       if (t.requires_grad(pred)) {
                         Tensor<T>& gp = t.grad(pred);
                         for (std::int64_t i = 0; i < count; ++i) gp[i] += scale * (p[i] - q[i]);
                       }
                       if (t.requires_grad(target)) {
                         Tensor<T>& gq = t.grad(target);
                         for (std::int64_t i = 0; i < count; ++i) gq[i] -= scale * (p[i] - q[i]);
                       }
                     });
}

}  // namespace evonas
