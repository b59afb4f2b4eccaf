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

// Gradient producers plugged into the (masked) training loop.

#ifndef CWRF_TRAINERS_HPP_
#define CWRF_TRAINERS_HPP_

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>
#include <variant>

#include "cwrf/dataset.hpp"
#include "cwrf/error.hpp"
#include "cwrf/loss.hpp"
#include "cwrf/model.hpp"
#include "cwrf/rng.hpp"

namespace cwrf::defense {

using nn::GradientVector;
using nn::Matrix;

struct PlainCe {};

// Descend while the batch loss is above alpha; below it, fit flattened
// posteriors that keep the correct argmax so the training loss settles near
// alpha instead of collapsing to zero.
struct RelaxLoss {
  double alpha = 1.0;
};

// Per-example clipping to L2 norm `clip` plus Gaussian noise of std
// noise·clip/B on the mean. No privacy accounting.
struct DpSgd {
  double clip = 1.0;
  double noise = 1.0;
};

using TrainerConfig = std::variant<PlainCe, RelaxLoss, DpSgd>;

inline std::string trainer_name(const TrainerConfig& t) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, PlainCe>) return "plain_ce";
        if constexpr (std::is_same_v<T, RelaxLoss>) return "relaxloss";
        if constexpr (std::is_same_v<T, DpSgd>) return "dpsgd";
      },
      t);
}

struct TrainerOutput {
  double loss = 0.0;  // batch mean cross-entropy w.r.t. the hard labels
  GradientVector grad;
};

inline TrainerOutput trainer_plain_ce(const nn::ParameterVector& params, const data::Batch& batch) {
  auto [loss, grad] = nn::backward_ce(params, batch.x, batch.y);
  return {loss, std::move(grad)};
}

// Soft target for a correctly classified example: exp(-alpha) on the label
// (kept above 1/K so the argmax survives), the rest spread uniformly.
inline double relaxloss_target_probability(double alpha, std::size_t classes) {
  const double floor = 1.0 / static_cast<double>(classes) + 1e-2;
  return std::clamp(std::exp(-alpha), floor, 1.0);
}

inline TrainerOutput trainer_relaxloss(const nn::ParameterVector& params, const data::Batch& batch,
                                       double alpha) {
  require(alpha >= 0.0, "relaxloss: alpha must be nonnegative");
  nn::ForwardCache cache;
  const Matrix logits = nn::forward(params, batch.x, &cache);
  const double ce = nn::loss_ce(logits, batch.y);
  if (ce >= alpha) {
    const auto lg = nn::ce_with_grad(logits, batch.y);
    return {ce, nn::backprop(params, cache, lg.dlogits)};
  }
  const std::size_t k = logits.cols();
  const double target = relaxloss_target_probability(alpha, k);
  const double rest = (1.0 - target) / static_cast<double>(k - 1);
  Matrix soft(logits.rows(), k, 0.0);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    const auto y = static_cast<std::size_t>(batch.y[i]);
    const auto pred = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    if (pred == y) {
      for (std::size_t j = 0; j < k; ++j) soft(i, j) = j == y ? target : rest;
    } else {
      soft(i, y) = 1.0;
    }
  }
  const auto lg = nn::soft_ce_with_grad(logits, soft);
  return {ce, nn::backprop(params, cache, lg.dlogits)};
}

inline TrainerOutput trainer_dpsgd(const nn::ParameterVector& params, const data::Batch& batch,
                                   double clip, double noise, Rng& rng) {
  require(clip > 0.0, "dpsgd: clip norm must be positive");
  require(noise >= 0.0, "dpsgd: noise multiplier must be nonnegative");
  const std::size_t b = batch.size();
  require(b > 0, "dpsgd: empty batch");
  TrainerOutput out{0.0, GradientVector(params.size())};
  Matrix row(1, batch.x.cols());
  for (std::size_t i = 0; i < b; ++i) {
    std::copy(batch.x.row(i).begin(), batch.x.row(i).end(), row.row(0).begin());
    const int label = batch.y[i];
    auto [loss, g] = nn::backward_ce(params, row, std::span<const int>(&label, 1));
    out.loss += loss;
    double sq = 0.0;
    for (double v : g.values) sq += v * v;
    const double norm = std::sqrt(sq);
    const double scale = norm > clip ? clip / norm : 1.0;
    for (std::size_t j = 0; j < g.size(); ++j) out.grad.values[j] += scale * g.values[j];
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  out.loss *= inv_b;
  const double stddev = noise * clip;
  for (double& v : out.grad.values) {
    if (stddev > 0.0) v += stddev * rng.normal();
    v *= inv_b;
  }
  return out;
}

inline TrainerOutput trainer_gradient(const TrainerConfig& trainer, const nn::ParameterVector& params,
                                      const data::Batch& batch, Rng& rng) {
  return std::visit(
      [&](const auto& t) -> TrainerOutput {
        using T = std::decay_t<decltype(t)>;
        if constexpr (std::is_same_v<T, PlainCe>) return trainer_plain_ce(params, batch);
        if constexpr (std::is_same_v<T, RelaxLoss>) return trainer_relaxloss(params, batch, t.alpha);
        if constexpr (std::is_same_v<T, DpSgd>) {
          return trainer_dpsgd(params, batch, t.clip, t.noise, rng);
        }
      },
      trainer);
}

}  // namespace cwrf::defense

#endif  // CWRF_TRAINERS_HPP_
