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

// Shared oracles for the test binaries.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "evonas/autodiff.hpp"
#include "evonas/ops.hpp"
#include "evonas/rng.hpp"

namespace evonas::testing {

inline Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(s);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(rng, lo, hi);
  return t;
}

/// Values whose pairwise gaps are at least `gap`; keeps max-pool argmax and
/// ReLU kinks away from the finite-difference stencil.
inline Tensor<double> spaced_tensor(Shape s, Rng& rng, double gap = 0.01) {
  Tensor<double> t(s);
  std::vector<double> vals(static_cast<std::size_t>(t.numel()));
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = (static_cast<double>(i) + 0.5) * gap;
  const double mid = vals.empty() ? 0.0 : vals.back() / 2;
  for (double& v : vals) v -= mid;
  std::shuffle(vals.begin(), vals.end(), rng);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = vals[static_cast<std::size_t>(i)];
  return t;
}

using GraphFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

struct GradCheck {
  double rel_error = 0;
  std::string worst;
};

/// Compares tape gradients of sum(f(inputs) * r) (random r) with central
/// differences of step h. Error is ||analytic - numeric|| / max(||.||, tiny)
/// taken per input and maximized.
inline GradCheck check_gradients(const GraphFn& f, std::vector<Tensor<double>> inputs, Rng& rng,
                                 double h = 1e-4) {
  Tensor<double> weights;
  auto loss_of = [&](const std::vector<Tensor<double>>& in, std::vector<Tensor<double>>* grads) {
    Tape<double> tape(grads != nullptr);
    std::vector<Var<double>> vars;
    for (const auto& t : in) vars.push_back(tape.leaf(t));
    Var<double> out = f(tape, vars);
    if (weights.shape() != out.shape()) {
      weights = random_tensor(out.shape(), rng, 0.5, 1.5);
    }
    Var<double> loss = sum(mul(out, tape.constant(weights)));
    if (grads) {
      tape.backward(loss);
      grads->clear();
      for (auto v : vars) {
        grads->push_back(tape.has_grad(v) ? tape.grad(v) : Tensor<double>(v.shape()));
      }
    }
    return loss.value()[0];
  };
  std::vector<Tensor<double>> analytic;
  loss_of(inputs, &analytic);
  GradCheck result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    double diff2 = 0, a2 = 0, n2 = 0;
    for (std::int64_t i = 0; i < inputs[k].numel(); ++i) {
      const double orig = inputs[k][i];
      inputs[k][i] = orig + h;
      const double up = loss_of(inputs, nullptr);
      inputs[k][i] = orig - h;
      const double down = loss_of(inputs, nullptr);
      inputs[k][i] = orig;
      const double num = (up - down) / (2 * h);
      const double an = analytic[k][i];
      diff2 += (an - num) * (an - num);
      a2 += an * an;
      n2 += num * num;
    }
    const double scale = std::max({std::sqrt(a2), std::sqrt(n2), 1e-10});
    const double rel = std::sqrt(diff2) / scale;
    if (rel > result.rel_error) {
      result.rel_error = rel;
      result.worst = "input " + std::to_string(k);
    }
  }
  return result;
}

/// Direct-summation convolution with zero padding (k-1)/2.
inline Tensor<double> brute_conv(const Tensor<double>& x, const ConvSpec& s, const Tensor<double>& w,
                                 const Tensor<double>* b) {
  const Shape xs = x.shape();
  const Shape3 os = s.output_shape(xs.per_sample());
  Tensor<double> y(Shape{xs.n, os.c, os.h, os.w});
  const std::int64_t g = s.groups();
  const std::int64_t in_per = s.in_channels / g, out_per = s.out_channels / g;
  const int p = s.padding(), k = s.kernel, st = s.stride;
  for (std::int64_t n = 0; n < xs.n; ++n) {
    if (!s.transposed) {
      for (std::int64_t oc = 0; oc < os.c; ++oc) {
        const std::int64_t grp = oc / out_per;
        for (std::int64_t oy = 0; oy < os.h; ++oy)
          for (std::int64_t ox = 0; ox < os.w; ++ox) {
            double acc = b ? (*b)[oc] : 0.0;
            for (std::int64_t ic = 0; ic < in_per; ++ic)
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  const std::int64_t iy = oy * st - p + ky, ix = ox * st - p + kx;
                  if (iy < 0 || ix < 0 || iy >= xs.h || ix >= xs.w) continue;
                  acc += x.at(n, grp * in_per + ic, iy, ix) * w.at(oc, ic, ky, kx);
                }
            y.at(n, oc, oy, ox) = acc;
          }
      }
    } else {
      for (std::int64_t oc = 0; oc < os.c; ++oc)
        for (std::int64_t oy = 0; oy < os.h; ++oy)
          for (std::int64_t ox = 0; ox < os.w; ++ox) y.at(n, oc, oy, ox) = b ? (*b)[oc] : 0.0;
      for (std::int64_t ic = 0; ic < xs.c; ++ic) {
        const std::int64_t grp = ic / in_per;
        for (std::int64_t iy = 0; iy < xs.h; ++iy)
          for (std::int64_t ix = 0; ix < xs.w; ++ix)
            for (std::int64_t j = 0; j < out_per; ++j)
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  const std::int64_t oy = iy * st - p + ky, ox = ix * st - p + kx;
                  if (oy < 0 || ox < 0 || oy >= os.h || ox >= os.w) continue;
                  y.at(n, grp * out_per + j, oy, ox) += x.at(n, ic, iy, ix) * w.at(ic, j, ky, kx);
                }
      }
    }
  }
  return y;
}

}  // namespace evonas::testing
