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

#ifndef CWRF_MASKS_HPP_
#define CWRF_MASKS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <vector>

#include "cwrf/checkpoint.hpp"
#include "cwrf/error.hpp"
#include "cwrf/model.hpp"
#include "cwrf/scoring.hpp"

namespace cwrf::defense {

using nn::ParameterVector;

// rewind[i] = 1 selects θ_vn[i] and freezes coordinate i;
// finetune[i] = 1 - rewind[i] marks the coordinates that keep training.
struct MaskPair {
  nn::Layout layout;
  std::vector<std::uint8_t> rewind;
  std::vector<std::uint8_t> finetune;
  double rate = 0.0;
  double threshold = 0.0;  // lowest score among the rewound coordinates

  std::size_t size() const { return rewind.size(); }
  std::size_t rewound_count() const {
    return static_cast<std::size_t>(std::count(rewind.begin(), rewind.end(), std::uint8_t{1}));
  }

  // Same partition with the roles exchanged: the rewound set trains and the
  // rest is frozen.
  MaskPair swapped() const { return {layout, finetune, rewind, rate, threshold}; }
};

inline std::size_t rewind_count(double rate, std::size_t m) {
  return static_cast<std::size_t>(std::floor(rate * static_cast<double>(m) + 0.5));
}

// Rewinds the round(r·m) highest-scored coordinates; equal scores are taken
// in ascending index order until the count is exact.
inline MaskPair build_masks(const scoring::ScoreVector& scores, double rate) {
  require(rate > 0.0 && rate < 1.0, "build_masks: rate must lie in (0, 1)");
  require_finite(scores.values, "build_masks scores");
  const std::size_t m = scores.size();
  const std::size_t k = rewind_count(rate, m);
  require(k > 0 && k < m, "build_masks: round(r*m) must lie strictly between 0 and m");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores.values[a] > scores.values[b];
  });
  MaskPair masks{scores.layout, std::vector<std::uint8_t>(m, 0), std::vector<std::uint8_t>(m, 1),
                 rate, scores.values[order[k - 1]]};
  for (std::size_t i = 0; i < k; ++i) {
    masks.rewind[order[i]] = 1;
    masks.finetune[order[i]] = 0;
  }
  return masks;
}

// θ_rw = B_f ⊙ θ_up + B_r ⊙ θ_vn, as a coordinate select (exact copies).
inline ParameterVector rewind(const ParameterVector& unprotected, const ParameterVector& vanilla,
                              const MaskPair& masks) {
  require(unprotected.layout == vanilla.layout, "rewind: layout mismatch");
  require(masks.size() == unprotected.size(), "rewind: mask length mismatch");
  ParameterVector out = unprotected;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (masks.rewind[i]) out.values[i] = vanilla.values[i];
  }
  return out;
}

// Zeroes the rewind set instead of restoring initial values.
inline ParameterVector remove(const ParameterVector& unprotected, const MaskPair& masks) {
  require(masks.size() == unprotected.size(), "remove: mask length mismatch");
  ParameterVector out = unprotected;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (masks.rewind[i]) out.values[i] = 0.0;
  }
  return out;
}

inline void save_masks(const std::filesystem::path& path, const MaskPair& masks) {
  io::Container c;
  c.kind = io::PayloadKind::mask_pair;
  c.layout = masks.layout;
  c.aux = {masks.rate, masks.threshold};
  c.bits = masks.rewind;
  io::write_file(path, io::encode(c));
}

inline MaskPair load_masks(const std::filesystem::path& path) {
  const auto c = io::decode(io::read_file(path));
  if (c.kind != io::PayloadKind::mask_pair) throw FormatError("checkpoint: not a mask file");
  if (c.aux.size() != 2) throw FormatError("checkpoint: mask metadata missing");
  MaskPair masks{c.layout, c.bits, std::vector<std::uint8_t>(c.bits.size()), c.aux[0], c.aux[1]};
  for (std::size_t i = 0; i < masks.size(); ++i) masks.finetune[i] = 1 - masks.rewind[i];
  return masks;
}

}  // namespace cwrf::defense

#endif  // CWRF_MASKS_HPP_
