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

// Finite-difference gradient cases shared by the unit and acceptance suites.
// Each case builds one random instance per seed and returns the norm-based
// relative error between tape and central-difference gradients.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "evonas/genome.hpp"
#include "evonas/ops.hpp"
#include "test_util.hpp"

namespace evonas::testing {

inline constexpr int kGradientSeeds = 50;
inline constexpr double kGradientTolerance = 1e-4;

struct GradientCase {
  std::string name;
  std::function<GradCheck(int seed)> run;
};

inline Shape small_shape(Rng& rng, std::int64_t min_hw = 1) {
  return {uniform_int(rng, 1, 3), uniform_int(rng, 1, 4), uniform_int(rng, min_hw, 4), uniform_int(rng, min_hw, 4)};
}

inline GradientCase unary_case(std::string name, std::uint64_t salt, std::function<Var<double>(Var<double>)> op,
                               bool spaced) {
  return {std::move(name), [=](int seed) {
            Rng rng(static_cast<std::uint64_t>(seed) + salt);
            const Shape s = small_shape(rng);
            auto x = spaced ? spaced_tensor(s, rng, 0.05) : random_tensor(s, rng, -2, 2);
            return check_gradients([&](Tape<double>&, const std::vector<Var<double>>& v) { return op(v[0]); }, {x},
                                   rng);
          }};
}

inline std::vector<GradientCase> gradient_cases() {
  std::vector<GradientCase> cases;
  cases.push_back(unary_case("relu", 100, [](Var<double> x) { return relu(x); }, true));
  cases.push_back(unary_case("elu", 110, [](Var<double> x) { return elu(x); }, true));
  cases.push_back(unary_case("selu", 120, [](Var<double> x) { return selu(x); }, true));
  cases.push_back(unary_case("tanh", 130, [](Var<double> x) { return evonas::tanh(x); }, false));
  cases.push_back(unary_case("sigmoid", 140, [](Var<double> x) { return sigmoid(x); }, false));
  cases.push_back(unary_case("softmax", 150, [](Var<double> x) { return softmax_channels(x); }, false));
  cases.push_back(unary_case("instance_norm", 160, [](Var<double> x) { return instance_norm(x); }, false));
  cases.push_back(unary_case("upsample", 170, [](Var<double> x) { return upsample_nn_2x(x); }, false));

  cases.push_back({"prelu", [](int seed) {
                     Rng rng(static_cast<std::uint64_t>(seed) + 200);
                     auto x = spaced_tensor(small_shape(rng), rng, 0.05);
                     auto a = Tensor<double>(Shape{1, 1, 1, 1}, uniform(rng, 0.05, 0.5));
                     return check_gradients(
                         [](Tape<double>&, const std::vector<Var<double>>& v) { return prelu(v[0], v[1]); }, {x, a},
                         rng);
                   }});

  cases.push_back({"local_response_norm", [](int seed) {
                     Rng rng(static_cast<std::uint64_t>(seed) + 300);
                     const Shape s = small_shape(rng);
                     auto x = random_tensor(s, rng, -2, 2);
                     const double alpha = seed % 2 ? 1e-4 : 0.7;
                     return check_gradients(
                         [&](Tape<double>&, const std::vector<Var<double>>& v) {
                           return local_response_norm(v[0], LrnParams{s.c, alpha, 0.75, 1.0});
                         },
                         {x}, rng);
                   }});

  cases.push_back({"batch_norm_training", [](int seed) {
                     Rng rng(static_cast<std::uint64_t>(seed) + 400);
                     Shape s = small_shape(rng);
                     s.n = std::max<std::int64_t>(s.n, 2);
                     auto x = random_tensor(s, rng, -2, 2);
                     auto gamma = random_tensor(Shape{1, s.c, 1, 1}, rng, 0.5, 1.5);
                     auto beta = random_tensor(Shape{1, s.c, 1, 1}, rng);
                     return check_gradients(
                         [&](Tape<double>&, const std::vector<Var<double>>& v) {
                           BatchNormStats<double> stats(s.c);
                           return batch_norm(v[0], std::optional{v[1]}, std::optional{v[2]}, &stats, true);
                         },
                         {x, gamma, beta}, rng);
                   }});

  cases.push_back({"batch_norm_inference", [](int seed) {
                     Rng rng(static_cast<std::uint64_t>(seed) + 450);
                     const Shape s = small_shape(rng);
                     auto x = random_tensor(s, rng, -2, 2);
                     auto gamma = random_tensor(Shape{1, s.c, 1, 1}, rng, 0.5, 1.5);
                     auto beta = random_tensor(Shape{1, s.c, 1, 1}, rng);
                     BatchNormStats<double> stats(s.c);
                     for (std::int64_t c = 0; c < s.c; ++c) {
                       stats.mean[c] = uniform(rng, -1, 1);
                       stats.var[c] = uniform(rng, 0.5, 2);
                     }
                     return check_gradients(
                         [&](Tape<double>&, const std::vector<Var<double>>& v) {
                           BatchNormStats<double> copy = stats;
                           return batch_norm(v[0], std::optional{v[1]}, std::optional{v[2]}, &copy, false);
                         },
                         {x, gamma, beta}, rng);
                   }});

  cases.push_back({"max_pool", [](int seed) {
                     Rng rng(static_cast<std::uint64_t>(seed) + 500);
                     auto x = spaced_tensor(small_shape(rng, 2), rng, 0.01);
                     return check_gradients(
                         [](Tape<double>&, const std::vector<Var<double>>& v) { return max_pool_2x2(v[0]); }, {x}, rng);
                   }});

  cases.push_back({"adaptive_pool", [](int seed) {
                     Rng rng(static_cast<std::uint64_t>(seed) + 600);
                     const Shape s = small_shape(rng);
                     const Shape3 t{uniform_int(rng, 1, 5), uniform_int(rng, 1, 5), uniform_int(rng, 1, 5)};
                     auto x = random_tensor(s, rng);
                     return check_gradients(
                         [&](Tape<double>&, const std::vector<Var<double>>& v) { return adaptive_avg_pool3d(v[0], t); },
                         {x}, rng);
                   }});

  cases.push_back({"connectives", [](int seed) {
                     Rng rng(static_cast<std::uint64_t>(seed) + 700);
                     const Shape a = small_shape(rng);
                     Shape b = small_shape(rng);
                     b.n = a.n;
                     auto xa = random_tensor(a, rng), xb = random_tensor(b, rng);
                     GradCheck worst;
                     for (auto kind : {ConnectiveKind::Concat, ConnectiveKind::Add, ConnectiveKind::Mul})
                       for (auto rt : {ResizeTarget::First, ResizeTarget::Second}) {
                         auto r = check_gradients(
                             [&](Tape<double>&, const std::vector<Var<double>>& v) {
                               return connective(kind, v[0], v[1], rt);
                             },
                             {xa, xb}, rng);
                         if (r.rel_error >= worst.rel_error) worst = r;
                       }
                     return worst;
                   }});

  cases.push_back({"mse_loss", [](int seed) {
                     Rng rng(static_cast<std::uint64_t>(seed) + 800);
                     const Shape s = small_shape(rng);
                     return check_gradients(
                         [](Tape<double>&, const std::vector<Var<double>>& v) { return mse_loss(v[0], v[1]); },
                         {random_tensor(s, rng), random_tensor(s, rng)}, rng);
                   }});

  cases.push_back({"conv2d", [](int seed) {
                     Rng rng(static_cast<std::uint64_t>(seed) + 900);
                     const bool sep = bernoulli(rng, 0.5);
                     const std::int64_t cin = uniform_int(rng, 1, 3);
                     const std::int64_t cout = sep ? cin * uniform_int(rng, 1, 2) : uniform_int(rng, 1, 4);
                     ConvSpec spec{cin, cout, static_cast<int>(pick(rng, kKernels)),
                                   static_cast<int>(pick(rng, kStrides)), bernoulli(rng, 0.5), sep, false,
                                   bernoulli(rng, 0.5)};
                     Shape s = small_shape(rng);
                     s.c = cin;
                     std::vector<Tensor<double>> in{random_tensor(s, rng), random_tensor(spec.weight_shape(), rng)};
                     if (spec.bias) in.push_back(random_tensor(Shape{1, cout, 1, 1}, rng));
                     return check_gradients(
                         [&](Tape<double>&, const std::vector<Var<double>>& v) {
                           std::optional<Var<double>> b;
                           if (v.size() > 2) b = v[2];
                           return conv2d(v[0], spec, v[1], b);
                         },
                         in, rng);
                   }});

  cases.push_back({"weight_norm", [](int seed) {
                     Rng rng(static_cast<std::uint64_t>(seed) + 1000);
                     const Shape ws{uniform_int(rng, 1, 4), uniform_int(rng, 1, 3), 3, 3};
                     auto v = random_tensor(ws, rng);
                     auto g = random_tensor(Shape{ws.n, 1, 1, 1}, rng, 0.5, 2);
                     return check_gradients(
                         [](Tape<double>&, const std::vector<Var<double>>& in) { return weight_norm(in[0], in[1]); },
                         {v, g}, rng);
                   }});
  return cases;
}

}  // namespace evonas::testing
