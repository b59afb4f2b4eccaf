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

// Critical-weight rewinding and fine-tuning, and the ablation scenarios that
// separate "where a weight sits" from "what value it holds".

#ifndef CWRF_DEFENSE_HPP_
#define CWRF_DEFENSE_HPP_

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cwrf/dataset.hpp"
#include "cwrf/masks.hpp"
#include "cwrf/model.hpp"
#include "cwrf/scoring.hpp"
#include "cwrf/splits.hpp"
#include "cwrf/training.hpp"

namespace cwrf::defense {

struct CwrfResult {
  nn::ParameterVector params;
  MaskPair masks;
  scoring::ScoreVector scores;
  RunLog log;
};

// Score-independent tail of the pipeline: mask, rewind, then masked
// fine-tuning on D_tr from a fresh optimizer with the schedule restarted.
inline CwrfResult run_cwrf(const nn::ParameterVector& unprotected,
                           const nn::ParameterVector& vanilla, const data::Dataset& pool,
                           const data::DatasetSplits& splits, const scoring::ScoreVector& scores,
                           double rate, const TrainConfig& finetune) {
  CwrfResult res{{}, build_masks(scores, rate), scores, {}};
  res.params = rewind(unprotected, vanilla, res.masks);
  res.log = train(res.params, pool, splits.members, splits.test, finetune, res.masks.finetune);
  return res;
}

inline CwrfResult run_cwrf(const nn::ParameterVector& unprotected,
                           const nn::ParameterVector& vanilla, const data::Dataset& pool,
                           const data::DatasetSplits& splits, const scoring::PveConfig& pve,
                           double rate, const TrainConfig& finetune) {
  auto scores =
      scoring::pve_scores(unprotected, vanilla, pool, splits.members, splits.reference, pve);
  return run_cwrf(unprotected, vanilla, pool, splits, scores, rate, finetune);
}

enum class Scenario { M1, M2, M3, A1, A2, A3 };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::M1: return "M1";
    case Scenario::M2: return "M2";
    case Scenario::M3: return "M3";
    case Scenario::A1: return "A1";
    case Scenario::A2: return "A2";
    case Scenario::A3: return "A3";
  }
  return "?";
}

inline Scenario scenario_from_string(const std::string& s) {
  for (auto k : {Scenario::M1, Scenario::M2, Scenario::M3, Scenario::A1, Scenario::A2,
                 Scenario::A3}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown scenario: " + s);
}

struct ScenarioInputs {
  const nn::ParameterVector* unprotected = nullptr;
  const nn::ParameterVector* vanilla = nullptr;
  const data::Dataset* pool = nullptr;
  const data::DatasetSplits* splits = nullptr;
  const scoring::ScoreVector* learnability = nullptr;  // M2, M3
  const scoring::ScoreVector* privacy = nullptr;       // A1, A2, A3
  TrainConfig retrain;   // M2 retraining of the surviving weights
  TrainConfig finetune;  // A1-A3 fine-tuning with the privacy trainer
  double prune_sparsity = 0.85;
  double rate = 0.05;
};

struct ScenarioResult {
  Scenario kind = Scenario::M1;
  double rate = 0.0;  // rewind portion (A*) or sparsity (M2/M3)
  nn::ParameterVector params;
  std::vector<std::uint8_t> trainable;  // empty when nothing was trained
  RunLog log;
  Evaluation train;
  Evaluation test;
};

//   M1  the trained model itself
//   M2  prune the lowest-learnability weights, rewind survivors, retrain them
//   M3  prune with the same mask, no retraining
//   A1  zero the most vulnerable weights, fine-tune the rest
//   A2  rewind the most vulnerable weights and fine-tune only those
//   A3  rewind the most vulnerable weights, fine-tune the rest (CWRF)
inline ScenarioResult run_scenario(Scenario kind, const ScenarioInputs& in) {
  require(in.unprotected && in.vanilla && in.pool && in.splits, "run_scenario: missing inputs");
  const auto& pool = *in.pool;
  const auto& splits = *in.splits;
  ScenarioResult res;
  res.kind = kind;
  switch (kind) {
    case Scenario::M1:
      res.params = *in.unprotected;
      break;
    case Scenario::M2:
    case Scenario::M3: {
      require(in.learnability != nullptr, "run_scenario: M2/M3 need learnability scores");
      res.rate = in.prune_sparsity;
      const auto keep = scoring::prune_keep_mask(*in.learnability, in.prune_sparsity);
      if (kind == Scenario::M3) {
        res.params = scoring::prune_oneshot(*in.unprotected, *in.learnability, in.prune_sparsity);
        break;
      }
      res.params = *in.vanilla;
      for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) res.params.values[i] = 0.0;
      }
      res.trainable = keep;
      res.log = defense::train(res.params, pool, splits.members, splits.test, in.retrain, keep);
      break;
    }
    case Scenario::A1:
    case Scenario::A2:
    case Scenario::A3: {
      require(in.privacy != nullptr, "run_scenario: A1-A3 need privacy scores");
      res.rate = in.rate;
      const auto masks = build_masks(*in.privacy, in.rate);
      if (kind == Scenario::A1) {
        res.params = remove(*in.unprotected, masks);
        res.trainable = masks.finetune;
      } else if (kind == Scenario::A2) {
        res.params = rewind(*in.unprotected, *in.vanilla, masks);
        res.trainable = masks.swapped().finetune;
      } else {
        res.params = rewind(*in.unprotected, *in.vanilla, masks);
        res.trainable = masks.finetune;
      }
      res.log = defense::train(res.params, pool, splits.members, splits.test, in.finetune,
                               res.trainable);
      break;
    }
  }
  res.train = evaluate(res.params, pool, splits.members);
  res.test = evaluate(res.params, pool, splits.test);
  return res;
}

}  // namespace cwrf::defense

#endif  // CWRF_DEFENSE_HPP_
