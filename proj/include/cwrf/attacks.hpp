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

// Membership-inference attacks calibrated with shadow models: a global
// confidence threshold, a two-Gaussian likelihood ratio (LiRA style) and a
// pairwise likelihood-ratio test against a population (RMIA style).

#ifndef CWRF_ATTACKS_HPP_
#define CWRF_ATTACKS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cwrf/dataset.hpp"
#include "cwrf/error.hpp"
#include "cwrf/loss.hpp"
#include "cwrf/metrics.hpp"
#include "cwrf/model.hpp"
#include "cwrf/parallel.hpp"
#include "cwrf/splits.hpp"

namespace cwrf::mia {

inline constexpr double kProbabilityClamp = 1e-7;

// ln(p / (1 - p)) with p clamped to [eps, 1 - eps].
inline double logit_scale(double p) {
  p = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return std::log(p) - std::log1p(-p);
}

inline double true_class_probability(std::span<const double> logits, int label) {
  const double lse = nn::log_sum_exp(logits);
  return std::exp(logits[static_cast<std::size_t>(label)] - lse);
}

inline double logit_confidence(const nn::ParameterVector& params, std::span<const double> features,
                               int label) {
  nn::Matrix x(1, features.size());
  std::copy(features.begin(), features.end(), x.row(0).begin());
  const nn::Matrix logits = nn::forward(params, x);
  return logit_scale(true_class_probability(logits.row(0), label));
}

// True-class probabilities of `params` on pool[indices].
inline std::vector<double> true_class_probabilities(const nn::ParameterVector& params,
                                                    const data::Dataset& pool,
                                                    std::span<const std::size_t> indices) {
  const auto batch = data::gather(pool, indices);
  const nn::Matrix logits = nn::forward(params, batch.x);
  std::vector<double> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out[i] = true_class_probability(logits.row(i), batch.y[i]);
  }
  return out;
}

inline std::vector<double> logit_confidences(std::span<const double> probabilities) {
  std::vector<double> out(probabilities.size());
  std::transform(probabilities.begin(), probabilities.end(), out.begin(), logit_scale);
  return out;
}

// Shadow models plus their cached outputs on every query example. Queries are
// the plan's evaluation set followed by any extra population points; extra
// points are OUT for every shadow.
struct ShadowEnsemble {
  std::vector<std::size_t> query;
  std::vector<std::vector<std::uint8_t>> in;          // [shadow][query]
  std::vector<std::vector<double>> probability;       // [shadow][query]
  std::vector<std::vector<double>> confidence;        // logit-scaled probability
  std::vector<nn::ParameterVector> models;

  std::size_t n_shadow() const { return in.size(); }
  std::size_t n_query() const { return query.size(); }
};

// make_model(shadow_index, member_indices) -> trained ParameterVector. Shadows
// train in parallel; each cache slot is written once by its own task.
template <class MakeModel>
ShadowEnsemble train_shadows(const data::ShadowSplitPlan& plan, const data::Dataset& pool,
                             std::span<const std::size_t> extra_queries, MakeModel&& make_model,
                             std::size_t workers = 1) {
  require(plan.n_shadow() >= 2, "train_shadows: need at least two shadows");
  ShadowEnsemble ens;
  ens.query = plan.eval;
  for (auto q : extra_queries) {
    if (std::find(plan.eval.begin(), plan.eval.end(), q) == plan.eval.end()) ens.query.push_back(q);
  }
  const std::size_t n = plan.n_shadow();
  ens.in.resize(n);
  ens.probability.resize(n);
  ens.confidence.resize(n);
  ens.models.resize(n);
  parallel_for(n, workers, [&](std::size_t s) {
    ens.models[s] = make_model(s, std::span<const std::size_t>(plan.members[s]));
    ens.probability[s] = true_class_probabilities(ens.models[s], pool, ens.query);
    for (double p : ens.probability[s]) require_finite(p, "shadow confidence");
    ens.confidence[s] = logit_confidences(ens.probability[s]);
    ens.in[s].assign(ens.query.size(), 0);
    std::copy(plan.in[s].begin(), plan.in[s].end(), ens.in[s].begin());
  });
  return ens;
}

// ---- LiRA ----------------------------------------------------------------

// log N(phi; mu_in, var) - log N(phi; mu_out, var).
inline double lira_log_ratio(double phi, double mu_in, double mu_out, double variance) {
  const double din = phi - mu_in;
  const double dout = phi - mu_out;
  return (dout * dout - din * din) / (2.0 * variance);
}

struct LiraCalibration {
  std::vector<double> mean_in;   // per query
  std::vector<double> mean_out;  // per query
  double variance = 1.0;
  // Set when some query lacks two IN or two OUT observations; the variance is
  // then pooled around the global IN / OUT means instead of per-example means.
  bool global_variance = false;
  bool offline = false;
};

inline constexpr double kMinVariance = 1e-8;

inline LiraCalibration calibrate_lira(const ShadowEnsemble& ens, bool offline = false) {
  const std::size_t nq = ens.n_query();
  const std::size_t ns = ens.n_shadow();
  LiraCalibration cal;
  cal.offline = offline;
  cal.mean_in.assign(nq, 0.0);
  cal.mean_out.assign(nq, 0.0);
  std::vector<std::size_t> n_in(nq, 0), n_out(nq, 0);
  double global_in = 0.0, global_out = 0.0;
  std::size_t total_in = 0, total_out = 0;
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t q = 0; q < nq; ++q) {
      const double c = ens.confidence[s][q];
      if (ens.in[s][q]) {
        cal.mean_in[q] += c;
        ++n_in[q];
        global_in += c;
        ++total_in;
      } else {
        cal.mean_out[q] += c;
        ++n_out[q];
        global_out += c;
        ++total_out;
      }
    }
  }
  global_in = total_in ? global_in / static_cast<double>(total_in) : 0.0;
  global_out = total_out ? global_out / static_cast<double>(total_out) : 0.0;
  bool enough = true;
  for (std::size_t q = 0; q < nq; ++q) {
    cal.mean_in[q] = n_in[q] ? cal.mean_in[q] / static_cast<double>(n_in[q]) : global_in;
    cal.mean_out[q] = n_out[q] ? cal.mean_out[q] / static_cast<double>(n_out[q]) : global_out;
    if (n_out[q] < 2 || (!offline && n_in[q] < 2)) enough = false;
  }
  cal.global_variance = !enough;
  double ss = 0.0;
  std::size_t dof = 0;
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t q = 0; q < nq; ++q) {
      const bool is_in = ens.in[s][q] != 0;
      if (offline && is_in) continue;
      const double center = cal.global_variance ? (is_in ? global_in : global_out)
                                                : (is_in ? cal.mean_in[q] : cal.mean_out[q]);
      const double d = ens.confidence[s][q] - center;
      ss += d * d;
      ++dof;
    }
  }
  std::size_t groups = 0;
  if (cal.global_variance) {
    groups = (offline ? 0 : (total_in > 0)) + (total_out > 0);
  } else {
    for (std::size_t q = 0; q < nq; ++q) groups += (offline ? 0 : (n_in[q] > 0)) + (n_out[q] > 0);
  }
  cal.variance = dof > groups ? ss / static_cast<double>(dof - groups) : 1.0;
  cal.variance = std::max(cal.variance, kMinVariance);
  return cal;
}

// Online: two-Gaussian log-likelihood ratio. Offline: standardized distance
// above the OUT mean.
inline double lira_score(const LiraCalibration& cal, std::size_t query, double target_confidence) {
  if (cal.offline) {
    return (target_confidence - cal.mean_out[query]) / std::sqrt(cal.variance);
  }
  return lira_log_ratio(target_confidence, cal.mean_in[query], cal.mean_out[query], cal.variance);
}

// ---- RMIA ----------------------------------------------------------------

// Fraction of population points z with
//   (P(x|target) / Pref(x)) / (P(z|target) / Pref(z)) >= gamma.
inline double rmia_score(double p_x_target, double p_x_reference,
                         std::span<const double> p_z_target, std::span<const double> p_z_reference,
                         double gamma) {
  require(!p_z_target.empty(), "rmia_score: empty population");
  require(p_z_target.size() == p_z_reference.size(), "rmia_score: population length mismatch");
  auto clampp = [](double p) { return std::max(p, kProbabilityClamp); };
  const double ratio_x = clampp(p_x_target) / clampp(p_x_reference);
  std::size_t dominated = 0;
  for (std::size_t i = 0; i < p_z_target.size(); ++i) {
    const double ratio_z = clampp(p_z_target[i]) / clampp(p_z_reference[i]);
    if (ratio_x >= gamma * ratio_z) ++dominated;
  }
  return static_cast<double>(dominated) / static_cast<double>(p_z_target.size());
}

// Mean true-class probability over the OUT shadows of each query (all shadows
// if a query has no OUT shadow).
inline std::vector<double> out_reference_probability(const ShadowEnsemble& ens) {
  std::vector<double> ref(ens.n_query(), 0.0);
  for (std::size_t q = 0; q < ens.n_query(); ++q) {
    double sum = 0.0, all = 0.0;
    std::size_t n = 0;
    for (std::size_t s = 0; s < ens.n_shadow(); ++s) {
      all += ens.probability[s][q];
      if (!ens.in[s][q]) {
        sum += ens.probability[s][q];
        ++n;
      }
    }
    ref[q] = n ? sum / static_cast<double>(n) : all / static_cast<double>(ens.n_shadow());
  }
  return ref;
}

// ---- attack results ------------------------------------------------------

enum class AttackKind { threshold, lira, rmia };

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::threshold: return "threshold";
    case AttackKind::lira: return "lira";
    case AttackKind::rmia: return "rmia";
  }
  return "?";
}

inline AttackKind attack_from_string(const std::string& s) {
  for (auto k : {AttackKind::threshold, AttackKind::lira, AttackKind::rmia}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown attack: " + s);
}

struct AttackResult {
  AttackKind kind = AttackKind::threshold;
  std::vector<std::size_t> examples;  // pool indices
  std::vector<double> scores;         // higher = more likely member
  std::vector<std::uint8_t> labels;   // 1 = member
  MetricBlock metrics;
};

inline AttackResult threshold_attack(std::span<const double> confidences,
                                     std::span<const std::uint8_t> labels,
                                     std::span<const double> fpr_grid = default_fpr_grid()) {
  AttackResult r;
  r.kind = AttackKind::threshold;
  r.scores.assign(confidences.begin(), confidences.end());
  r.labels.assign(labels.begin(), labels.end());
  r.metrics = roc_auc(r.scores, r.labels, fpr_grid);
  return r;
}

struct AttackConfig {
  std::vector<AttackKind> kinds{AttackKind::threshold, AttackKind::lira, AttackKind::rmia};
  std::vector<double> fpr_grid = default_fpr_grid();
  double rmia_gamma = 1.0;
  bool lira_offline = false;
};

// Attacks the target on the plan's evaluation set. `population` is the RMIA
// z-set (each x is excluded from its own comparison set); every population
// point must be present in ens.query.
inline std::vector<AttackResult> run_attacks(const nn::ParameterVector& target,
                                             const data::Dataset& pool,
                                             const data::ShadowSplitPlan& plan,
                                             const ShadowEnsemble& ens,
                                             std::span<const std::size_t> population,
                                             const AttackConfig& cfg) {
  const std::size_t n_eval = plan.eval.size();
  const auto target_prob = true_class_probabilities(target, pool, ens.query);
  const auto target_conf = logit_confidences(target_prob);
  std::vector<std::size_t> eval_idx(plan.eval.begin(), plan.eval.end());
  std::vector<AttackResult> results;
  for (AttackKind kind : cfg.kinds) {
    AttackResult r;
    r.kind = kind;
    r.examples = eval_idx;
    r.labels = plan.eval_is_member;
    r.scores.resize(n_eval);
    if (kind == AttackKind::threshold) {
      std::copy(target_conf.begin(), target_conf.begin() + static_cast<std::ptrdiff_t>(n_eval),
                r.scores.begin());
    } else if (kind == AttackKind::lira) {
      const auto cal = calibrate_lira(ens, cfg.lira_offline);
      for (std::size_t q = 0; q < n_eval; ++q) r.scores[q] = lira_score(cal, q, target_conf[q]);
    } else {
      const auto ref = out_reference_probability(ens);
      std::unordered_map<std::size_t, std::size_t> position;
      for (std::size_t q = 0; q < ens.n_query(); ++q) position.emplace(ens.query[q], q);
      std::vector<std::size_t> zpos;
      for (auto z : population) {
        const auto it = position.find(z);
        require(it != position.end(), "run_attacks: population point missing from shadow cache");
        zpos.push_back(it->second);
      }
      for (std::size_t q = 0; q < n_eval; ++q) {
        std::vector<double> zt, zr;
        for (auto zp : zpos) {
          if (zp == q) continue;
          zt.push_back(target_prob[zp]);
          zr.push_back(ref[zp]);
        }
        r.scores[q] = rmia_score(target_prob[q], ref[q], zt, zr, cfg.rmia_gamma);
      }
    }
    r.metrics = roc_auc(r.scores, r.labels, cfg.fpr_grid);
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace cwrf::mia

#endif  // CWRF_ATTACKS_HPP_
