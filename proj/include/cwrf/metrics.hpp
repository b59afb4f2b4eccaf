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

#ifndef CWRF_METRICS_HPP_
#define CWRF_METRICS_HPP_

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "cwrf/error.hpp"

namespace cwrf::mia {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;  // predict member when score >= threshold
};

struct TprAtFpr {
  double fpr = 0.0;
  double tpr = 0.0;
  // At least 10/fpr negatives, so the operating point is resolvable.
  bool supported = false;
};

struct MetricBlock {
  double auc = 0.5;
  std::vector<RocPoint> roc;
  std::vector<TprAtFpr> tpr_at;
};

inline const std::vector<double>& default_fpr_grid() {
  static const std::vector<double> grid{1e-1, 1e-2, 1e-3};
  return grid;
}

namespace detail {

inline void check(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  require(!scores.empty(), "roc: empty input");
  require(scores.size() == labels.size(), "roc: score/label length mismatch");
  const auto pos = std::count_if(labels.begin(), labels.end(), [](auto l) { return l != 0; });
  require(pos > 0 && static_cast<std::size_t>(pos) < labels.size(), "roc: both classes required");
}

}  // namespace detail

// ROC from sweeping every distinct score (descending), from (0,0) to (1,1).
// AUC is the Mann-Whitney statistic with half credit for ties, accumulated
// from integer counts so it is exact.
inline MetricBlock roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels,
                           std::span<const double> fpr_grid = default_fpr_grid()) {
  detail::check(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t total_pos = 0;
  for (auto l : labels) total_pos += l != 0 ? 1 : 0;
  const std::size_t total_neg = labels.size() - total_pos;

  MetricBlock block;
  block.roc.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  std::size_t tp = 0, fp = 0;
  double concordant = 0.0;  // in units of half pairs
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    std::size_t group_pos = 0, group_neg = 0;
    for (; i < order.size() && scores[order[i]] == s; ++i) {
      (labels[order[i]] != 0 ? group_pos : group_neg) += 1;
    }
    const std::size_t neg_below = total_neg - fp - group_neg;
    concordant += static_cast<double>(2 * group_pos * neg_below + group_pos * group_neg);
    tp += group_pos;
    fp += group_neg;
    block.roc.push_back({static_cast<double>(fp) / static_cast<double>(total_neg),
                         static_cast<double>(tp) / static_cast<double>(total_pos), s});
  }
  block.auc = concordant / (2.0 * static_cast<double>(total_pos) * static_cast<double>(total_neg));
  for (double target : fpr_grid) {
    double best = 0.0;
    for (const auto& p : block.roc) {
      if (p.fpr <= target) best = std::max(best, p.tpr);
    }
    block.tpr_at.push_back({target, best, static_cast<double>(total_neg) * target >= 10.0});
  }
  return block;
}

// Largest TPR among points with FPR <= target (step convention).
inline double tpr_at_fpr(std::span<const RocPoint> roc, double fpr_target) {
  require(!roc.empty(), "tpr_at_fpr: empty ROC");
  double best = 0.0;
  for (const auto& p : roc) {
    if (p.fpr <= fpr_target) best = std::max(best, p.tpr);
  }
  return best;
}

}  // namespace cwrf::mia

#endif  // CWRF_METRICS_HPP_
