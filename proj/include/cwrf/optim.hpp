//
// Copyright 2026 The CWRF Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef CWRF_OPTIM_HPP_
#define CWRF_OPTIM_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "cwrf/error.hpp"
#include "cwrf/model.hpp"

namespace cwrf::nn {

// Cosine annealing with a zero floor: base_lr at step 0, 0 at total_steps.
inline double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
  require(total_steps > 0 && step <= total_steps, "cosine_lr: step out of [0, total_steps]");
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * t));
}

struct AdamConfig {
  double base_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // decoupled
  std::size_t total_steps = 1;
};

struct OptimizerState {
  AdamConfig config;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::size_t step = 0;

  static OptimizerState fresh(std::size_t m, const AdamConfig& config) {
    require(config.total_steps > 0, "OptimizerState: total_steps must be positive");
    return {config, std::vector<double>(m, 0.0), std::vector<double>(m, 0.0), 0};
  }

  double current_lr() const { return cosine_lr(step, config.total_steps, config.base_lr); }
};

// One AdamW update at the scheduled learning rate. When `trainable` is given,
// coordinates with trainable[i] == 0 are skipped entirely: no gradient, no
// weight decay, no moment accumulation.
inline void adam_step(ParameterVector& params, const GradientVector& grads, OptimizerState& state,
                      std::span<const std::uint8_t> trainable = {}) {
  const std::size_t m = params.size();
  require(grads.size() == m && state.first_moment.size() == m && state.second_moment.size() == m,
          "adam_step: length mismatch");
  require(trainable.empty() || trainable.size() == m, "adam_step: mask length mismatch");
  if (state.step >= state.config.total_steps) {
    throw std::logic_error("adam_step: schedule exhausted");
  }
  const AdamConfig& c = state.config;
  const double lr = state.current_lr();
  const double t = static_cast<double>(state.step + 1);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  double* theta = params.values.data();
  const double* g = grads.values.data();
  double* m1 = state.first_moment.data();
  double* m2 = state.second_moment.data();
  for (std::size_t i = 0; i < m; ++i) {
    if (!trainable.empty() && trainable[i] == 0) continue;
    m1[i] = c.beta1 * m1[i] + (1.0 - c.beta1) * g[i];
    m2[i] = c.beta2 * m2[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double m_hat = m1[i] / correction1;
    const double v_hat = m2[i] / correction2;
    theta[i] -= lr * (m_hat / (std::sqrt(v_hat) + c.eps) + c.weight_decay * theta[i]);
  }
  ++state.step;
}

}  // namespace cwrf::nn

#endif  // CWRF_OPTIM_HPP_
