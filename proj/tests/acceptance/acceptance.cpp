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

// Acceptance suite. Runs every criterion with fixed tolerances on the desk
// benchmark and prints one PASS/FAIL line per criterion.
//
//   acceptance [config] [criterion ...]

#include <bit>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cwrf/attacks.hpp"
#include "cwrf/checkpoint.hpp"
#include "cwrf/config.hpp"
#include "cwrf/experiment.hpp"
#include "cwrf/masks.hpp"
#include "cwrf/metrics.hpp"
#include "cwrf/scoring.hpp"
#include "test_support.hpp"

namespace {

using namespace cwrf;
using Clock = std::chrono::steady_clock;

constexpr double kGradTolerance = 1e-4;
constexpr double kFdStep = 1e-4;
constexpr double kGradSeconds = 10.0;
constexpr double kMaskSeconds = 5.0;
constexpr double kAttackSeconds = 300.0;
constexpr double kMinThresholdAuc = 0.60;
constexpr double kLiraSlack = 0.05;
constexpr double kMinLiraReduction = 0.05;
constexpr double kMaxAccuracyDrop = 0.03;
constexpr double kMinRemoveRewindGap = 0.10;
constexpr double kCeSlack = 0.05;
constexpr double kPruneAccuracyBudget = 0.05;
constexpr double kPruneSparsity = 0.90;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// ---- 1 ----------------------------------------------------------------------

Outcome gradient_oracle() {
  const auto start = Clock::now();
  Rng rng(20261014);
  double worst = 0.0;
  std::size_t largest = 0;
  const int instances = 20;
  for (int t = 0; t < instances; ++t) {
    const auto spec = testing::random_spec(rng);
    const auto student = testing::random_params(spec, rng);
    const auto teacher = testing::random_params(spec, rng);
    largest = std::max(largest, student.size());
    const auto pool = testing::random_dataset(12, spec.input_dim, spec.output_dim, rng);
    const std::vector<std::size_t> mi{0, 1, 2, 3, 4, 5}, ri{6, 7, 8, 9, 10, 11};
    const auto mb = data::gather(pool, mi);
    const auto rb = data::gather(pool, ri);
    const auto tl = nn::forward(teacher, rb.x);
    const double lambda = rng.uniform();

    const auto [ce, gce] = nn::backward_ce(student, mb.x, mb.y);
    const auto fce = testing::finite_difference(
        student, [&](const nn::ParameterVector& q) { return nn::loss_ce(nn::forward(q, mb.x), mb.y); },
        kFdStep);
    const auto [kl, gkl] = nn::backward_kl(student, rb.x, tl);
    const auto fkl = testing::finite_difference(
        student, [&](const nn::ParameterVector& q) { return nn::loss_kl(nn::forward(q, rb.x), tl); },
        kFdStep);
    const auto [pve, gpve] = scoring::pve_gradient(student, teacher, mb, rb, lambda);
    const auto fpve = testing::finite_difference(
        student,
        [&](const nn::ParameterVector& q) { return scoring::loss_pve(q, teacher, mb, rb, lambda); },
        kFdStep);
    worst = std::max({worst, testing::relative_error(gce.values, fce),
                      testing::relative_error(gkl.values, fkl),
                      testing::relative_error(gpve.values, fpve)});
  }
  const double secs = seconds_since(start);
  return {worst < kGradTolerance && secs < kGradSeconds && largest <= 1000,
          fmt("%d instances (m <= %zu), max rel err %.2e (< %.0e), %.2f s (< %.0f s)", instances,
              largest, worst, kGradTolerance, secs, kGradSeconds)};
}

// ---- 2 ----------------------------------------------------------------------

Outcome mask_exactness() {
  const auto start = Clock::now();
  Rng rng(7);
  std::size_t bad = 0;
  const int pairs = 1000;
  for (int t = 0; t < pairs; ++t) {
    const auto spec = testing::random_spec(rng);
    const auto vn = nn::init_params(spec);
    auto up = testing::random_params(spec, rng);
    const std::size_t m = vn.size();
    scoring::ScoreVector s{vn.layout, std::vector<double>(m), scoring::ScoreKind::privacy, 1};
    const std::size_t levels = 2 + rng.below(m);
    for (double& v : s.values) v = static_cast<double>(rng.below(levels));
    double r = 0.0;
    do {
      r = rng.uniform();
    } while (defense::rewind_count(r, m) < 1 || defense::rewind_count(r, m) >= m);
    const auto masks = defense::build_masks(s, r);
    const auto out = defense::rewind(up, vn, masks);
    std::size_t count = 0;
    bool ok = true;
    for (std::size_t i = 0; i < m; ++i) {
      count += masks.rewind[i];
      ok = ok && masks.rewind[i] + masks.finetune[i] == 1;
      const double want = masks.rewind[i] ? vn.values[i] : up.values[i];
      ok = ok && std::bit_cast<std::uint64_t>(out.values[i]) == std::bit_cast<std::uint64_t>(want);
    }
    ok = ok && count == static_cast<std::size_t>(std::llround(r * static_cast<double>(m)));
    if (!ok) ++bad;
  }
  const double secs = seconds_since(start);
  return {bad == 0 && secs < kMaskSeconds,
          fmt("%d (scores, r) pairs, %zu mismatches, %.2f s (< %.0f s)", pairs, bad, secs,
              kMaskSeconds)};
}

// ---- 4 ----------------------------------------------------------------------

Outcome reduction_identity(const lab::ExperimentConfig& cfg) {
  const auto w = lab::make_world(cfg, cfg.seeds.front());
  lab::SubjectModels target(cfg, w, lab::target_subject(w));
  scoring::PveConfig pve = cfg.pve;
  pve.lambda = 0.0;
  pve.iterations = 1;
  pve.seed = 4242;
  const auto a = scoring::pve_scores(target.unprotected(), target.vanilla(), w.pool,
                                     w.splits.members, w.splits.reference, pve);
  const auto b = scoring::tfo_scores(target.unprotected(), w.pool, w.splits.members, 1, pve.lr,
                                     pve.batch_size, pve.seed);
  std::size_t diff = 0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    diff += std::bit_cast<std::uint64_t>(a.values[i]) != std::bit_cast<std::uint64_t>(b.values[i]);
  }
  return {diff == 0 && a.size() == b.size(),
          fmt("m = %zu, %zu coordinates differ (exact)", a.size(), diff)};
}

// ---- 5 ----------------------------------------------------------------------

Outcome metrics_oracle() {
  Rng rng(5);
  std::size_t bad = 0;
  const int instances = 2000;
  for (int t = 0; t < instances; ++t) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    const std::size_t levels = 1 + rng.below(20);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(levels)) * 0.1;
      y[i] = static_cast<std::uint8_t>(rng.bernoulli(0.5));
    }
    y[0] = 1;
    y[n - 1] = 0;
    if (mia::roc_auc(s, y).auc != testing::brute_force_auc(s, y)) ++bad;
  }
  const std::vector<double> hs{0.9, 0.8, 0.4, 0.7, 0.3, 0.2};
  const std::vector<std::uint8_t> hy{1, 1, 1, 0, 0, 0};
  const double hand = mia::roc_auc(hs, hy).auc;
  const bool hand_ok = std::fabs(hand - 8.0 / 9.0) < 1e-15;
  return {bad == 0 && hand_ok, fmt("%d random instances (<= 200 points, ties), %zu mismatches; "
                                   "hand case %.12f (8/9)", instances, bad, hand)};
}

// ---- benchmark-scale criteria ------------------------------------------------

struct Bench {
  std::vector<lab::ResultRecord> records;
  double none_seconds = 0.0;
  std::vector<lab::ScenarioTable> scenarios;
  std::vector<std::vector<lab::SweepRow>> sweeps;
  std::map<std::pair<std::uint64_t, std::string>, std::vector<std::uint8_t>> checkpoints;
  Outcome freeze;
};

std::string cell_key(const lab::ResultRecord& r) {
  return r.defense + (r.rate ? fmt("@%.4f", *r.rate) : std::string());
}

std::vector<std::uint8_t> checkpoint_bytes(const nn::ParameterVector& p) {
  return io::encode(io::parameters_container(p));
}

Outcome freeze_permanence(const lab::ExperimentConfig& cfg, lab::SeedLab& lab) {
  auto& target = lab.target();
  const auto& vn = target.vanilla();
  const double rate = cfg.rates.front();
  std::size_t moved = 0, frozen = 0;
  std::string trainers;
  for (const defense::TrainerConfig& trainer :
       {defense::TrainerConfig{defense::PlainCe{}}, defense::TrainerConfig{defense::RelaxLoss{}},
        defense::TrainerConfig{defense::DpSgd{}}}) {
    const auto ft = target.finetune_config("freeze-check", trainer);
    const auto res = defense::run_cwrf(target.unprotected(), vn, lab.world().pool,
                                       target.splits_view(), target.privacy_scores(), rate, ft);
    for (std::size_t i = 0; i < vn.size(); ++i) {
      if (!res.masks.rewind[i]) continue;
      ++frozen;
      if (std::bit_cast<std::uint64_t>(res.params.values[i]) !=
          std::bit_cast<std::uint64_t>(vn.values[i])) {
        ++moved;
      }
    }
    trainers += (trainers.empty() ? "" : ",") + defense::trainer_name(trainer);
  }
  return {moved == 0 && cfg.finetune.epochs == 40,
          fmt("trainers {%s}, E = %zu, r = %.2f: %zu of %zu frozen coordinates moved", trainers.c_str(),
              cfg.finetune.epochs, rate, moved, frozen)};
}

Bench run_bench(const lab::ExperimentConfig& cfg) {
  Bench b;
  auto scen_cfg = cfg;
  scen_cfg.portions = {0.03, 0.05};
  const std::vector<double> sparsities{0.0, kPruneSparsity};
  for (auto seed : cfg.seeds) {
    std::cerr << "[acceptance] seed " << seed << '\n';
    lab::SeedLab lab(cfg, seed);
    const auto t0 = Clock::now();
    auto none = lab.run_cell(lab::DefenseFamily::none, std::nullopt);
    b.none_seconds += seconds_since(t0);
    b.records.push_back(none.record);
    b.checkpoints[{seed, cell_key(none.record)}] = checkpoint_bytes(none.target);
    for (const auto& [family, rate] : lab::defense_cells(cfg)) {
      if (family == lab::DefenseFamily::none) continue;
      auto cell = lab.run_cell(family, rate);
      b.checkpoints[{seed, cell_key(cell.record)}] = checkpoint_bytes(cell.target);
      b.records.push_back(std::move(cell.record));
    }
    b.scenarios.push_back(lab::run_scenarios(scen_cfg, lab.target(), lab.world()));
    b.sweeps.push_back(lab::pruning_sweep(lab.target(), lab.world(), sparsities, cfg.workers));
    if (seed == cfg.seeds.front()) b.freeze = freeze_permanence(cfg, lab);
  }
  return b;
}

Outcome attack_sanity(const lab::ExperimentConfig& cfg, const Bench& b) {
  const auto rows = lab::summarize(b.records);
  const auto& none = rows.front();
  const double thr = none.auc.at("threshold").mean;
  const double lira = none.auc.at("lira").mean;
  const bool shape = cfg.synthetic.classes == 4 && cfg.synthetic.dim == 16 && cfg.n_members == 180 &&
                     cfg.n_reference == 20 && cfg.n_shadow == 8 && cfg.seeds.size() == 3;
  return {shape && thr >= kMinThresholdAuc && lira >= thr - kLiraSlack &&
              b.none_seconds < kAttackSeconds,
          fmt("undefended: threshold AUC %.3f (>= %.2f), LiRA AUC %.3f (>= %.3f), test acc %.3f, "
              "train acc %.3f; %.1f s (< %.0f s)",
              thr, kMinThresholdAuc, lira, thr - kLiraSlack, none.test_acc.mean,
              none.train_acc.mean, b.none_seconds, kAttackSeconds)};
}

Outcome defense_direction(const lab::ExperimentConfig& cfg, const Bench& b,
                          std::optional<double>& selected) {
  const auto rows = lab::summarize(b.records);
  const auto& none = rows.front();
  std::string grid;
  for (const auto& r : rows) {
    if (r.family != lab::DefenseFamily::trainer_cwrf) continue;
    grid += fmt(" r=%.2f:%.3f/%.3f", *r.rate, r.auc.at("lira").mean, r.test_acc.mean);
  }
  const bool relax = std::holds_alternative<defense::RelaxLoss>(cfg.privacy_trainer);
  const auto sel = lab::select_rate(rows, cfg.max_accuracy_drop);
  if (!sel) {
    return {false, fmt("no rate within the accuracy budget; none LiRA %.3f acc %.3f; grid (LiRA/acc)%s",
                       none.auc.at("lira").mean, none.test_acc.mean, grid.c_str())};
  }
  selected = sel->rate;
  const double reduction = none.auc.at("lira").mean - sel->auc.at("lira").mean;
  const double drop = none.test_acc.mean - sel->test_acc.mean;
  return {relax && reduction >= kMinLiraReduction && drop <= kMaxAccuracyDrop,
          fmt("%s at r = %.2f: LiRA %.3f -> %.3f (reduction %.3f, need >= %.2f), test acc drop "
              "%.3f (<= %.2f); grid (LiRA/acc)%s",
              defense::trainer_name(cfg.privacy_trainer).c_str(), *sel->rate,
              none.auc.at("lira").mean, sel->auc.at("lira").mean, reduction, kMinLiraReduction,
              drop, kMaxAccuracyDrop, grid.c_str())};
}

Outcome position_vs_value(const Bench& b) {
  bool pass = true;
  std::string detail;
  for (std::size_t p = 0; p < 2; ++p) {
    double a1 = 0, a3 = 0, gap2 = 0, gap3 = 0;
    for (const auto& t : b.scenarios) {
      const auto& A1 = t.rewinding[3 * p];
      const auto& A2 = t.rewinding[3 * p + 1];
      const auto& A3 = t.rewinding[3 * p + 2];
      a1 += A1.test.accuracy;
      a3 += A3.test.accuracy;
      gap2 += A2.test.loss - A2.train.loss;
      gap3 += A3.test.loss - A3.train.loss;
    }
    const double n = static_cast<double>(b.scenarios.size());
    a1 /= n, a3 /= n, gap2 /= n, gap3 /= n;
    pass = pass && a3 - a1 >= kMinRemoveRewindGap && gap3 <= gap2;
    detail += fmt("%sr=%.0f%%: acc A1 %.3f vs A3 %.3f (gap %.3f, need >= %.2f), CE gap A3 %.3f "
                  "vs A2 %.3f", p ? "; " : "", p ? 5.0 : 3.0, a1, a3, a3 - a1,
                  kMinRemoveRewindGap, gap3, gap2);
  }
  return {pass, detail};
}

Outcome pruning_keeps_vulnerability(const Bench& b) {
  double ce0 = 0, ce = 0, acc0 = 0, acc = 0;
  for (const auto& rows : b.sweeps) {
    ce0 += rows[0].test.loss;
    acc0 += rows[0].test.accuracy;
    ce += rows[1].test.loss;
    acc += rows[1].test.accuracy;
  }
  const double n = static_cast<double>(b.sweeps.size());
  ce0 /= n, ce /= n, acc0 /= n, acc /= n;
  return {ce >= ce0 - kCeSlack && std::fabs(acc - acc0) <= kPruneAccuracyBudget,
          fmt("sparsity %.0f%%: test CE %.3f vs unpruned %.3f (need >= %.3f), test acc %.3f vs %.3f "
              "(within %.2f)",
              100 * kPruneSparsity, ce, ce0, ce0 - kCeSlack, acc, acc0, kPruneAccuracyBudget)};
}

Outcome determinism(const lab::ExperimentConfig& cfg, const Bench& b, std::optional<double> rate) {
  const auto seed = cfg.seeds.front();
  lab::SeedLab lab(cfg, seed);
  std::size_t cells = 0, bad = 0;
  const std::vector<std::pair<lab::DefenseFamily, std::optional<double>>> reruns{
      {lab::DefenseFamily::none, std::nullopt},
      {lab::DefenseFamily::trainer, std::nullopt},
      {lab::DefenseFamily::trainer_cwrf, rate.value_or(cfg.rates.front())}};
  for (const auto& [family, r] : reruns) {
    const auto cell = lab.run_cell(family, r);
    const auto key = std::make_pair(seed, cell_key(cell.record));
    const lab::ResultRecord* first = nullptr;
    for (const auto& rec : b.records) {
      if (rec.seed == seed && cell_key(rec) == key.second) first = &rec;
    }
    ++cells;
    if (!first || !lab::same_results(*first, cell.record) ||
        b.checkpoints.at(key) != checkpoint_bytes(cell.target)) {
      ++bad;
    }
  }
  return {bad == 0, fmt("seed %llu: %zu cells rerun, %zu differ (records minus runtime, checkpoint bytes)",
                        static_cast<unsigned long long>(seed), cells, bad)};
}

}  // namespace

int main(int argc, char** argv) {
  std::string config_path = "configs/desk.cfg";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (!a.empty() && std::isdigit(static_cast<unsigned char>(a[0]))) only.insert(std::stoi(a));
    else config_path = a;
  }
  auto want = [&](int k) { return only.empty() || only.count(k) > 0; };

  lab::ExperimentConfig cfg;
  try {
    cfg = lab::to_experiment_config(lab::KeyValues::load(config_path));
  } catch (const std::exception& e) {
    std::cerr << "acceptance: " << e.what() << '\n';
    return 2;
  }

  const std::vector<std::string> names{"",
                                       "gradient oracle",
                                       "mask/rewind exactness",
                                       "freeze permanence",
                                       "reduction identity",
                                       "metrics oracle",
                                       "attack sanity",
                                       "defense direction",
                                       "position vs value",
                                       "pruning keeps vulnerability",
                                       "determinism"};
  std::map<int, Outcome> outcomes;
  auto record = [&](int k, const std::function<Outcome()>& f) {
    if (!want(k)) return;
    try {
      outcomes[k] = f();
    } catch (const std::exception& e) {
      outcomes[k] = {false, std::string("exception: ") + e.what()};
    }
    const auto& o = outcomes[k];
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << k << "] " << names[k] << ": " << o.detail
              << std::endl;
  };

  record(1, gradient_oracle);
  record(2, mask_exactness);
  record(4, [&] { return reduction_identity(cfg); });
  record(5, metrics_oracle);

  if (want(3) || want(6) || want(7) || want(8) || want(9) || want(10)) {
    std::optional<Bench> bench;
    try {
      bench = run_bench(cfg);
    } catch (const std::exception& e) {
      for (int k : {3, 6, 7, 8, 9, 10}) {
        record(k, [&]() -> Outcome { return {false, std::string("benchmark failed: ") + e.what()}; });
      }
    }
    if (bench) {
      std::optional<double> selected;
      record(3, [&] { return bench->freeze; });
      record(6, [&] { return attack_sanity(cfg, *bench); });
      record(7, [&] { return defense_direction(cfg, *bench, selected); });
      record(8, [&] { return position_vs_value(*bench); });
      record(9, [&] { return pruning_keeps_vulnerability(*bench); });
      record(10, [&] { return determinism(cfg, *bench, selected); });
    }
  }

  std::size_t failed = 0;
  for (const auto& [k, o] : outcomes) failed += !o.pass;
  std::cout << "acceptance: " << outcomes.size() - failed << " of " << outcomes.size()
            << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
