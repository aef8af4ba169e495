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

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "evonas/autodiff.hpp"

namespace evonas {

enum class OptimizerKind { Adam, RMSprop, SGDMomentum };

inline constexpr double kMinLearningRate = 1e-5;
inline constexpr double kMaxLearningRate = 1e-1;
inline constexpr std::int64_t kDecayPeriod = 1000;

struct OptimizerHyper {
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double rms_alpha = 0.99;
  double rms_eps = 1e-8;
  double sgd_momentum = 0.9;
};

/// Inverse-time decay stepped every 1000 iterations.
inline double scheduled_learning_rate(double lr0, double decay, std::int64_t step) {
  return lr0 / (1.0 + decay * static_cast<double>(step / kDecayPeriod));
}

/// First-order optimizer with per-parameter moment buffers.
template <typename T>
class OptimizerState {
 public:
  OptimizerState(OptimizerKind kind, double lr0, double decay, OptimizerHyper hyper = {})
      : kind_(kind), lr0_(lr0), decay_(decay), hyper_(hyper) {
    if (!(lr0 >= kMinLearningRate && lr0 <= kMaxLearningRate)) {
      throw std::invalid_argument("initial learning rate out of range: " + std::to_string(lr0));
    }
    if (!(decay >= 0.0 && decay <= 1.0)) {
      throw std::invalid_argument("learning rate decay out of range: " + std::to_string(decay));
    }
  }

  OptimizerKind kind() const { return kind_; }
  double lr0() const { return lr0_; }
  double decay() const { return decay_; }
  std::int64_t step_count() const { return step_; }
  double current_lr() const { return scheduled_learning_rate(lr0_, decay_, step_); }

  /// Applies one update to every parameter from its accumulated gradient.
  /// Throws NumericError (leaving parameters untouched) on non-finite grads.
  void step(std::span<Parameter<T>* const> params) {
    for (const Parameter<T>* p : params) {
      if (p->grad.shape() != p->value.shape()) continue;
      for (std::int64_t i = 0; i < p->grad.numel(); ++i) {
        if (!std::isfinite(p->grad[i])) throw NumericError("non-finite gradient in " + p->name);
      }
    }
    if (m_.size() != params.size()) {
      m_.assign(params.size(), {});
      v_.assign(params.size(), {});
    }
    const double lr = current_lr();
    ++step_;
    for (std::size_t k = 0; k < params.size(); ++k) {
      Parameter<T>& p = *params[k];
      if (p.grad.shape() != p.value.shape()) continue;
      std::vector<double>& m = m_[k];
      std::vector<double>& v = v_[k];
      const auto n = static_cast<std::size_t>(p.value.numel());
      if (m.size() != n) m.assign(n, 0.0);
      switch (kind_) {
        case OptimizerKind::Adam: {
          if (v.size() != n) v.assign(n, 0.0);
          const double b1 = hyper_.adam_beta1, b2 = hyper_.adam_beta2;
          const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
          const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
          for (std::size_t i = 0; i < n; ++i) {
            const double g = p.grad.vec()[i];
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            p.value.vec()[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + hyper_.adam_eps));
          }
          break;
        }
        case OptimizerKind::RMSprop: {
          const double a = hyper_.rms_alpha;
          for (std::size_t i = 0; i < n; ++i) {
            const double g = p.grad.vec()[i];
            m[i] = a * m[i] + (1.0 - a) * g * g;
            p.value.vec()[i] -= static_cast<T>(lr * g / (std::sqrt(m[i]) + hyper_.rms_eps));
          }
          break;
        }
        case OptimizerKind::SGDMomentum: {
          const double mu = hyper_.sgd_momentum;
          for (std::size_t i = 0; i < n; ++i) {
            const double g = p.grad.vec()[i];
            m[i] = mu * m[i] + g;
            p.value.vec()[i] -= static_cast<T>(lr * m[i]);
          }
          break;
        }
      }
    }
  }

  /// Moment buffers, one per parameter, in the order passed to step().
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  OptimizerKind kind_;
  double lr0_;
  double decay_;
  OptimizerHyper hyper_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

}  // namespace evonas
