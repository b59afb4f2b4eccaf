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

// Weight-level importance: learnability (Taylor first order on the training
// loss) and privacy vulnerability (the same accumulation under a
// learn-members / unlearn-non-members objective).

#ifndef CWRF_SCORING_HPP_
#define CWRF_SCORING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cwrf/checkpoint.hpp"
#include "cwrf/dataset.hpp"
#include "cwrf/error.hpp"
#include "cwrf/loss.hpp"
#include "cwrf/model.hpp"
#include "cwrf/splits.hpp"

namespace cwrf::scoring {

using nn::GradientVector;
using nn::Layout;
using nn::ParameterVector;

enum class ScoreKind : std::uint8_t { learnability, privacy };

struct ScoreVector {
  Layout layout;
  std::vector<double> values;
  ScoreKind kind = ScoreKind::learnability;
  std::size_t iterations = 0;

  std::size_t size() const { return values.size(); }
};

struct PveConfig {
  double lambda = 0.7;
  std::size_t iterations = 30;
  double lr = 1e-3;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;

  void validate() const {
    require(lambda >= 0.0 && lambda <= 1.0, "PveConfig: lambda must lie in [0, 1]");
    require(iterations >= 1, "PveConfig: iterations must be >= 1");
    require(batch_size >= 1, "PveConfig: batch size must be >= 1");
  }
};

namespace detail {

inline void accumulate_taylor(std::vector<double>& scores, const GradientVector& g,
                              std::span<const double> w) {
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] += std::abs(g.values[i] * w[i]);
}

inline void descend(ParameterVector& p, const GradientVector& g, double lr) {
  for (std::size_t i = 0; i < p.size(); ++i) p.values[i] -= lr * g.values[i];
}

inline std::uint64_t reference_stream(std::uint64_t seed) { return derive_seed(seed, "reference"); }

}  // namespace detail

// Learnability: sum over T iterations of |g ⊙ w| on member batches, with the
// scored copy updated by plain gradient descent in between.
inline ScoreVector tfo_scores(const ParameterVector& trained, const data::Dataset& pool,
                              std::span<const std::size_t> member_subset, std::size_t iterations,
                              double lr, std::size_t batch_size, std::uint64_t seed) {
  require(iterations >= 1, "tfo_scores: iterations must be >= 1");
  ParameterVector copy = trained;
  data::BatchSampler sampler(member_subset, batch_size, seed);
  ScoreVector out{trained.layout, std::vector<double>(trained.size(), 0.0),
                  ScoreKind::learnability, iterations};
  for (std::size_t t = 0; t < iterations; ++t) {
    const auto batch = data::sample_batch(pool, sampler);
    const auto [loss, grad] = nn::backward_ce(copy, batch.x, batch.y);
    detail::accumulate_taylor(out.values, grad, copy.values);
    detail::descend(copy, grad, lr);
  }
  return out;
}

// (1 - λ)·CE(student on members) + λ·KL(teacher || student on reference).
inline double loss_pve(const ParameterVector& student, const ParameterVector& teacher,
                       const data::Batch& members, const data::Batch& reference, double lambda) {
  require(members.size() > 0 && reference.size() > 0, "loss_pve: empty batch");
  require(lambda >= 0.0 && lambda <= 1.0, "loss_pve: lambda must lie in [0, 1]");
  const double ce = nn::loss_ce(nn::forward(student, members.x), members.y);
  const double kl = nn::loss_kl(nn::forward(student, reference.x), nn::forward(teacher, reference.x));
  return (1.0 - lambda) * ce + lambda * kl;
}

// Value and gradient of loss_pve w.r.t. the student. A term with weight
// exactly zero is skipped, which leaves the result bitwise unchanged.
inline std::pair<double, GradientVector> pve_gradient(const ParameterVector& student,
                                                      const ParameterVector& teacher,
                                                      const data::Batch& members,
                                                      const data::Batch& reference,
                                                      double lambda) {
  require(members.size() > 0 && reference.size() > 0, "pve_gradient: empty batch");
  const double w_ce = 1.0 - lambda;
  const double w_kl = lambda;
  GradientVector grad(student.size());
  double loss = 0.0;
  if (w_ce != 0.0) {
    auto [ce, g] = nn::backward_ce(student, members.x, members.y);
    loss += w_ce * ce;
    for (std::size_t i = 0; i < grad.size(); ++i) grad.values[i] += w_ce * g.values[i];
  }
  if (w_kl != 0.0) {
    const nn::Matrix teacher_logits = nn::forward(teacher, reference.x);
    auto [kl, g] = nn::backward_kl(student, reference.x, teacher_logits);
    loss += w_kl * kl;
    for (std::size_t i = 0; i < grad.size(); ++i) grad.values[i] += w_kl * g.values[i];
  }
  require_finite(loss, "loss_pve");
  return {loss, std::move(grad)};
}

// Privacy-vulnerability scores. The member sampler uses cfg.seed (so λ = 0
// reproduces tfo_scores batch for batch); the reference sampler uses a derived
// stream. θ_up is not modified.
inline ScoreVector pve_scores(const ParameterVector& unprotected, const ParameterVector& vanilla,
                              const data::Dataset& pool, std::span<const std::size_t> members,
                              std::span<const std::size_t> reference, const PveConfig& cfg) {
  cfg.validate();
  require(!reference.empty(), "pve_scores: empty reference set");
  require(!members.empty(), "pve_scores: empty member set");
  require(unprotected.layout == vanilla.layout, "pve_scores: layout mismatch");
  ParameterVector copy = unprotected;
  data::BatchSampler member_sampler(members, cfg.batch_size, cfg.seed);
  data::BatchSampler reference_sampler(reference, cfg.batch_size,
                                       detail::reference_stream(cfg.seed));
  ScoreVector out{unprotected.layout, std::vector<double>(unprotected.size(), 0.0),
                  ScoreKind::privacy, cfg.iterations};
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    const auto mb = data::sample_batch(pool, member_sampler);
    const auto rb = data::sample_batch(pool, reference_sampler);
    const auto [loss, grad] = pve_gradient(copy, vanilla, mb, rb, cfg.lambda);
    detail::accumulate_taylor(out.values, grad, copy.values);
    detail::descend(copy, grad, cfg.lr);
  }
  return out;
}

// Indices ordered by ascending score, ties by ascending index.
inline std::vector<std::size_t> ascending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return order;
}

// 1 = kept, 0 = pruned; the floor(sparsity·m) lowest-scored weights are pruned.
inline std::vector<std::uint8_t> prune_keep_mask(const ScoreVector& scores, double sparsity) {
  require(sparsity >= 0.0 && sparsity < 1.0, "prune: sparsity must lie in [0, 1)");
  const std::size_t m = scores.size();
  const auto k = static_cast<std::size_t>(std::floor(sparsity * static_cast<double>(m)));
  std::vector<std::uint8_t> keep(m, 1);
  const auto order = ascending_order(scores.values);
  for (std::size_t i = 0; i < k; ++i) keep[order[i]] = 0;
  return keep;
}

inline ParameterVector prune_oneshot(const ParameterVector& params, const ScoreVector& scores,
                                     double sparsity) {
  require(params.layout == scores.layout, "prune_oneshot: layout mismatch");
  ParameterVector out = params;
  const auto keep = prune_keep_mask(scores, sparsity);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!keep[i]) out.values[i] = 0.0;
  }
  return out;
}

// ---- correlation ----------------------------------------------------------

enum class ParamGroup { all, dense, norm, output };

inline std::string to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::all: return "all";
    case ParamGroup::dense: return "dense";
    case ParamGroup::norm: return "norm";
    case ParamGroup::output: return "output";
  }
  return "?";
}

inline std::vector<std::size_t> group_indices(const Layout& layout, ParamGroup group) {
  std::vector<std::size_t> idx;
  for (const auto& e : layout.entries()) {
    const bool take = group == ParamGroup::all ||
                      (group == ParamGroup::dense && e.kind == nn::LayerKind::dense) ||
                      (group == ParamGroup::norm && e.kind == nn::LayerKind::norm) ||
                      (group == ParamGroup::output && e.kind == nn::LayerKind::output);
    if (!take) continue;
    for (std::size_t i = 0; i < e.length; ++i) idx.push_back(e.offset + i);
  }
  return idx;
}

// Sample Pearson correlation of two equal-length sequences.
template <class A, class B>
double pearson(const A& a, const B& b) {
  const std::size_t n = std::size(a);
  require(n == std::size(b), "pearson: length mismatch");
  require(n >= 2, "pearson: need at least two coordinates");
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= static_cast<double>(n);
  mean_b /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - mean_a;
    const double db = b[i] - mean_b;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  require(saa > 0.0 && sbb > 0.0, "pearson: zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double pearson(const ScoreVector& a, const ScoreVector& b, ParamGroup group) {
  require(a.layout == b.layout, "pearson: layout mismatch");
  const auto idx = group_indices(a.layout, group);
  std::vector<double> xa, xb;
  xa.reserve(idx.size());
  xb.reserve(idx.size());
  for (auto i : idx) {
    xa.push_back(a.values[i]);
    xb.push_back(b.values[i]);
  }
  return pearson(xa, xb);
}

struct CorrelationRow {
  ParamGroup group = ParamGroup::all;
  std::optional<double> pcc;  // empty when the group is too small or constant
  double proportion = 0.0;
  std::size_t count = 0;
};

struct CorrelationReport {
  ScoreVector learnability;
  ScoreVector privacy;
  std::vector<CorrelationRow> rows;
};

inline CorrelationReport correlation_report(const ScoreVector& learnability,
                                            const ScoreVector& privacy) {
  CorrelationReport rep{learnability, privacy, {}};
  const auto m = static_cast<double>(learnability.size());
  for (auto g : {ParamGroup::all, ParamGroup::dense, ParamGroup::norm, ParamGroup::output}) {
    CorrelationRow row;
    row.group = g;
    row.count = group_indices(learnability.layout, g).size();
    row.proportion = static_cast<double>(row.count) / m;
    try {
      row.pcc = pearson(learnability, privacy, g);
    } catch (const std::invalid_argument&) {
      row.pcc.reset();
    }
    rep.rows.push_back(row);
  }
  return rep;
}

// Runs both estimators on the splits (D_str = all members) and correlates them.
inline CorrelationReport correlation_report(const ParameterVector& unprotected,
                                            const ParameterVector& vanilla,
                                            const data::Dataset& pool,
                                            const data::DatasetSplits& splits,
                                            const PveConfig& cfg) {
  auto tfo = tfo_scores(unprotected, pool, splits.members, cfg.iterations, cfg.lr, cfg.batch_size,
                        cfg.seed);
  auto pve = pve_scores(unprotected, vanilla, pool, splits.members, splits.reference, cfg);
  return correlation_report(tfo, pve);
}

// ---- persistence ----------------------------------------------------------

inline void save_scores(const std::filesystem::path& path, const ScoreVector& s) {
  io::Container c;
  c.kind = s.kind == ScoreKind::privacy ? io::PayloadKind::privacy_scores
                                        : io::PayloadKind::learnability_scores;
  c.layout = s.layout;
  c.aux = {static_cast<double>(s.iterations)};
  c.values.assign(s.values.begin(), s.values.end());
  io::write_file(path, io::encode(c));
}

inline ScoreVector load_scores(const std::filesystem::path& path) {
  const auto c = io::decode(io::read_file(path));
  if (c.kind != io::PayloadKind::privacy_scores && c.kind != io::PayloadKind::learnability_scores) {
    throw FormatError("checkpoint: not a score file");
  }
  if (c.aux.size() != 1) throw FormatError("checkpoint: score metadata missing");
  return {c.layout, std::vector<double>(c.values.begin(), c.values.end()),
          c.kind == io::PayloadKind::privacy_scores ? ScoreKind::privacy : ScoreKind::learnability,
          static_cast<std::size_t>(c.aux[0])};
}

}  // namespace cwrf::scoring

#endif  // CWRF_SCORING_HPP_
