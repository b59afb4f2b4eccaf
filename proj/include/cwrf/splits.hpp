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

#ifndef CWRF_SPLITS_HPP_
#define CWRF_SPLITS_HPP_

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cwrf/dataset.hpp"
#include "cwrf/error.hpp"
#include "cwrf/rng.hpp"

namespace cwrf::data {

// Member set D_tr, non-member reference set D_re and test set; pairwise
// disjoint index sets over one pool.
struct DatasetSplits {
  std::vector<std::size_t> members;
  std::vector<std::size_t> reference;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;
};

struct SplitSizes {
  std::size_t members = 0;
  std::size_t reference = 0;
};

// Training/reference sample counts of the full-scale setups divided by 100.
inline SplitSizes desk_split_sizes(const std::string& dataset) {
  if (dataset == "cifar10") return {180, 20};
  if (dataset == "cifar100") return {180, 40};
  if (dataset == "cinic10") return {250, 50};
  throw std::invalid_argument("desk_split_sizes: unknown dataset " + dataset);
}

inline DatasetSplits make_splits(std::size_t pool_size, std::size_t n_members,
                                 std::size_t n_reference, std::size_t n_test,
                                 std::uint64_t seed) {
  require(n_members + n_reference + n_test <= pool_size,
          "make_splits: pool too small for requested split sizes");
  std::vector<std::size_t> order(pool_size);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  DatasetSplits s;
  s.seed = seed;
  auto it = order.begin();
  s.members.assign(it, it + static_cast<std::ptrdiff_t>(n_members));
  it += static_cast<std::ptrdiff_t>(n_members);
  s.reference.assign(it, it + static_cast<std::ptrdiff_t>(n_reference));
  it += static_cast<std::ptrdiff_t>(n_reference);
  s.test.assign(it, it + static_cast<std::ptrdiff_t>(n_test));
  return s;
}

inline DatasetSplits make_splits(const Dataset& pool, std::size_t n_members,
                                 std::size_t n_reference, std::size_t n_test,
                                 std::uint64_t seed) {
  return make_splits(pool.size(), n_members, n_reference, n_test, seed);
}

// Epoch-shuffled mini-batches without replacement. A batch never spans two
// epochs, so the last batch of an epoch may be short.
class BatchSampler {
 public:
  BatchSampler(std::span<const std::size_t> view, std::size_t batch_size, std::uint64_t seed)
      : view_(view.begin(), view.end()), batch_size_(batch_size), rng_(seed) {
    require(!view_.empty(), "BatchSampler: empty split");
    require(batch_size_ > 0, "BatchSampler: batch size must be positive");
    reshuffle();
  }

  std::vector<std::size_t> next() {
    if (cursor_ == order_.size()) reshuffle();
    const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
    std::vector<std::size_t> out(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(cursor_ + n));
    cursor_ += n;
    return out;
  }

  std::size_t batches_per_epoch() const {
    return (view_.size() + batch_size_ - 1) / batch_size_;
  }
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle() {
    order_ = view_;
    rng_.shuffle(order_.begin(), order_.end());
    cursor_ = 0;
    ++epoch_;
  }

  std::vector<std::size_t> view_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
  Rng rng_;
};

inline Batch sample_batch(const Dataset& ds, BatchSampler& sampler) {
  const auto idx = sampler.next();
  return gather(ds, idx);
}

// Shadow-model membership over the attack evaluation set: all target members
// (up to the number of test points) plus as many test points.
struct ShadowSplitPlan {
  std::uint64_t seed = 0;
  std::vector<std::size_t> eval;                   // pool indices
  std::vector<std::uint8_t> eval_is_member;        // 1 if in the target's D_tr
  std::vector<std::vector<std::uint8_t>> in;       // [shadow][eval position]
  std::vector<std::vector<std::size_t>> members;   // [shadow] pool indices
  std::vector<std::size_t> overlap_with_target;    // |shadow members ∩ D_tr|

  std::size_t n_shadow() const { return in.size(); }
  std::size_t in_count(std::size_t pos) const {
    std::size_t c = 0;
    for (const auto& s : in) c += s[pos];
    return c;
  }
};

// Shadows come in complementary pairs: a uniformly random half of the
// evaluation set trains shadow 2j and the other half trains shadow 2j+1. Every
// example is therefore IN for exactly n_shadow/2 shadows and every shadow has
// exactly |eval|/2 members. A half identical to the target's member set is
// redrawn.
inline ShadowSplitPlan plan_shadows(std::size_t pool_size, const DatasetSplits& splits,
                                    std::size_t n_shadow, std::uint64_t seed) {
  require(n_shadow >= 2 && n_shadow % 2 == 0, "plan_shadows: n_shadow must be even and >= 2");
  const std::size_t half = std::min(splits.members.size(), splits.test.size());
  require(half >= 1, "plan_shadows: pool too small (need members and test points)");
  for (auto i : splits.members) require(i < pool_size, "plan_shadows: index outside pool");
  for (auto i : splits.test) require(i < pool_size, "plan_shadows: index outside pool");

  ShadowSplitPlan plan;
  plan.seed = seed;
  for (std::size_t i = 0; i < half; ++i) {
    plan.eval.push_back(splits.members[i]);
    plan.eval_is_member.push_back(1);
  }
  for (std::size_t i = 0; i < half; ++i) {
    plan.eval.push_back(splits.test[i]);
    plan.eval_is_member.push_back(0);
  }
  const std::size_t n_eval = plan.eval.size();
  const bool target_uses_all = half == splits.members.size();

  Rng rng(seed);
  std::vector<std::size_t> order(n_eval);
  for (std::size_t pair = 0; pair < n_shadow / 2; ++pair) {
    std::vector<std::uint8_t> first;
    for (;;) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      rng.shuffle(order.begin(), order.end());
      first.assign(n_eval, 0);
      for (std::size_t i = 0; i < half; ++i) first[order[i]] = 1;
      if (!target_uses_all) break;
      // Either half equal to the target member set means exact reuse.
      if (first != plan.eval_is_member &&
          !std::equal(first.begin(), first.end(), plan.eval_is_member.begin(),
                      [](std::uint8_t a, std::uint8_t b) { return a != b; })) {
        break;
      }
    }
    std::vector<std::uint8_t> second(n_eval);
    for (std::size_t i = 0; i < n_eval; ++i) second[i] = 1 - first[i];
    plan.in.push_back(std::move(first));
    plan.in.push_back(std::move(second));
  }
  for (const auto& in : plan.in) {
    std::vector<std::size_t> m;
    std::size_t overlap = 0;
    for (std::size_t i = 0; i < n_eval; ++i) {
      if (in[i]) {
        m.push_back(plan.eval[i]);
        overlap += plan.eval_is_member[i];
      }
    }
    plan.members.push_back(std::move(m));
    plan.overlap_with_target.push_back(overlap);
  }
  return plan;
}

// ---- JSON manifests -------------------------------------------------------

inline nlohmann::json to_json(const DatasetSplits& s) {
  return {{"seed", s.seed}, {"members", s.members}, {"reference", s.reference}, {"test", s.test}};
}

inline DatasetSplits splits_from_json(const nlohmann::json& j) {
  try {
    DatasetSplits s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.members = j.at("members").get<std::vector<std::size_t>>();
    s.reference = j.at("reference").get<std::vector<std::size_t>>();
    s.test = j.at("test").get<std::vector<std::size_t>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("split manifest: ") + e.what());
  }
}

inline nlohmann::json to_json(const ShadowSplitPlan& p) {
  nlohmann::json shadows = nlohmann::json::array();
  for (std::size_t s = 0; s < p.n_shadow(); ++s) {
    shadows.push_back({{"members", p.members[s]},
                       {"overlap_with_target", p.overlap_with_target[s]},
                       {"partial_overlap", p.overlap_with_target[s] > 0}});
  }
  return {{"seed", p.seed},
          {"n_shadow", p.n_shadow()},
          {"eval", p.eval},
          {"eval_is_member", p.eval_is_member},
          {"shadows", shadows}};
}

inline ShadowSplitPlan shadow_plan_from_json(const nlohmann::json& j) {
  try {
    ShadowSplitPlan p;
    p.seed = j.at("seed").get<std::uint64_t>();
    p.eval = j.at("eval").get<std::vector<std::size_t>>();
    p.eval_is_member = j.at("eval_is_member").get<std::vector<std::uint8_t>>();
    for (const auto& s : j.at("shadows")) {
      auto members = s.at("members").get<std::vector<std::size_t>>();
      std::vector<std::uint8_t> in(p.eval.size(), 0);
      for (auto idx : members) {
        const auto it = std::find(p.eval.begin(), p.eval.end(), idx);
        if (it == p.eval.end()) throw FormatError("shadow manifest: member outside eval set");
        in[static_cast<std::size_t>(it - p.eval.begin())] = 1;
      }
      p.in.push_back(std::move(in));
      p.members.push_back(std::move(members));
      p.overlap_with_target.push_back(s.at("overlap_with_target").get<std::size_t>());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("shadow manifest: ") + e.what());
  }
}

}  // namespace cwrf::data

#endif  // CWRF_SPLITS_HPP_
