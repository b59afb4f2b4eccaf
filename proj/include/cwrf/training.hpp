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

#ifndef CWRF_TRAINING_HPP_
#define CWRF_TRAINING_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <vector>

#include <json.hpp>

#include "cwrf/dataset.hpp"
#include "cwrf/loss.hpp"
#include "cwrf/masks.hpp"
#include "cwrf/model.hpp"
#include "cwrf/optim.hpp"
#include "cwrf/splits.hpp"
#include "cwrf/trainers.hpp"

namespace cwrf::defense {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 5e-4;
  TrainerConfig trainer = PlainCe{};
  std::uint64_t seed = 0;
  // Evaluate train/test loss and accuracy after every epoch (else only last).
  bool log_every_epoch = true;
};

struct Evaluation {
  double loss = std::numeric_limits<double>::quiet_NaN();
  double accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

using RunLog = std::vector<EpochLog>;

inline Evaluation evaluate(const nn::ParameterVector& params, const data::Dataset& pool,
                           std::span<const std::size_t> indices) {
  if (indices.empty()) return {};
  const auto batch = data::gather(pool, indices);
  const nn::Matrix logits = nn::forward(params, batch.x);
  Evaluation ev;
  ev.loss = nn::loss_ce(logits, batch.y);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto z = logits.row(i);
    const auto pred = std::max_element(z.begin(), z.end()) - z.begin();
    correct += pred == batch.y[i] ? 1 : 0;
  }
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(indices.size());
  return ev;
}

// Adam update restricted to masks.finetune; gradient, decoupled decay and
// moments of rewound coordinates are never touched.
inline void masked_step(nn::ParameterVector& params, const nn::GradientVector& grads,
                        const MaskPair& masks, nn::OptimizerState& state) {
  require(masks.size() == params.size(), "masked_step: mask length mismatch");
  nn::adam_step(params, grads, state, masks.finetune);
}

// E epochs of mini-batch training from a fresh optimizer and a cosine schedule
// starting at cfg.lr. Coordinates with trainable[i] == 0 stay bitwise fixed.
inline RunLog train(nn::ParameterVector& params, const data::Dataset& pool,
                    std::span<const std::size_t> train_indices,
                    std::span<const std::size_t> test_indices, const TrainConfig& cfg,
                    std::span<const std::uint8_t> trainable = {}) {
  require(cfg.epochs >= 1, "train: epochs must be >= 1");
  require(cfg.lr > 0.0, "train: learning rate must be positive");
  data::BatchSampler sampler(train_indices, cfg.batch_size, derive_seed(cfg.seed, "batches"));
  Rng trainer_rng(derive_seed(cfg.seed, "trainer"));
  const std::size_t steps_per_epoch = sampler.batches_per_epoch();
  nn::AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay,
                      cfg.epochs * steps_per_epoch};
  auto state = nn::OptimizerState::fresh(params.size(), adam);
  RunLog log;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const auto batch = data::sample_batch(pool, sampler);
      const auto out = trainer_gradient(cfg.trainer, params, batch, trainer_rng);
      nn::adam_step(params, out.grad, state, trainable);
    }
    if (cfg.log_every_epoch || epoch == cfg.epochs) {
      const auto tr = evaluate(params, pool, train_indices);
      const auto te = evaluate(params, pool, test_indices);
      log.push_back({epoch, tr.loss, te.loss, tr.accuracy, te.accuracy});
    }
  }
  return log;
}

inline nlohmann::json to_json(const EpochLog& e) {
  auto num = [](double v) -> nlohmann::json {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  };
  return {{"epoch", e.epoch},
          {"train_loss", num(e.train_loss)},
          {"test_loss", num(e.test_loss)},
          {"train_acc", num(e.train_acc)},
          {"test_acc", num(e.test_acc)}};
}

inline void write_jsonl(std::ostream& out, const RunLog& log) {
  for (const auto& e : log) out << to_json(e).dump() << '\n';
}

}  // namespace cwrf::defense

#endif  // CWRF_TRAINING_HPP_
