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

// In-memory experiment recipes. Everything a cell produces is a function of
// the config and its seed; all random streams are derived from the seed by
// name, so a cell can be replayed alone.

#ifndef CWRF_EXPERIMENT_HPP_
#define CWRF_EXPERIMENT_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cwrf/attacks.hpp"
#include "cwrf/checkpoint.hpp"
#include "cwrf/config.hpp"
#include "cwrf/dataset.hpp"
#include "cwrf/defense.hpp"
#include "cwrf/masks.hpp"
#include "cwrf/model.hpp"
#include "cwrf/parallel.hpp"
#include "cwrf/scoring.hpp"
#include "cwrf/splits.hpp"
#include "cwrf/training.hpp"

namespace cwrf::lab {

using nn::ParameterVector;

// Dataset, splits and model architecture of one seed.
struct World {
  std::uint64_t seed = 0;
  data::Dataset pool;
  data::DatasetSplits splits;
  std::vector<std::size_t> unused;  // pool points outside every split
};

inline data::Dataset load_pool(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.dataset == "csv") return data::load_csv(cfg.csv_path);
  auto spec = cfg.synthetic;
  spec.seed = derive_seed(seed, "data");
  return data::gen_synthetic(spec);
}

inline World make_world(const ExperimentConfig& cfg, std::uint64_t seed) {
  World w;
  w.seed = seed;
  w.pool = load_pool(cfg, seed);
  w.splits = data::make_splits(w.pool, cfg.n_members, cfg.n_reference, cfg.n_test,
                               derive_seed(seed, "splits"));
  std::vector<std::uint8_t> used(w.pool.size(), 0);
  for (const auto* part : {&w.splits.members, &w.splits.reference, &w.splits.test}) {
    for (auto i : *part) used[i] = 1;
  }
  for (std::size_t i = 0; i < used.size(); ++i) {
    if (!used[i]) w.unused.push_back(i);
  }
  return w;
}

// A model owner: the target (D_tr, D_re) or one shadow (its half of the
// evaluation set plus a reference set).
struct Subject {
  std::string name;
  std::vector<std::size_t> members;
  std::vector<std::size_t> reference;
  std::vector<std::size_t> test;  // logging only; empty for shadows
  std::uint64_t stream = 0;
};

inline Subject target_subject(const World& w) {
  return {"target", w.splits.members, w.splits.reference, w.splits.test,
          derive_seed(w.seed, "target")};
}

inline data::ShadowSplitPlan shadow_plan(const ExperimentConfig& cfg, const World& w) {
  return data::plan_shadows(w.pool.size(), w.splits, cfg.n_shadow, derive_seed(w.seed, "shadows"));
}

inline Subject shadow_subject(const ExperimentConfig& cfg, const World& w,
                              const data::ShadowSplitPlan& plan, std::size_t s) {
  Subject sub;
  sub.name = "shadow" + std::to_string(s);
  sub.members = plan.members[s];
  sub.stream = derive_seed(derive_seed(w.seed, "shadow"), s);
  if (cfg.shadow_reference == ShadowReference::reuse || w.unused.size() < cfg.n_reference) {
    sub.reference = w.splits.reference;
  } else {
    auto pick = w.unused;
    Rng rng(derive_seed(sub.stream, "reference-set"));
    rng.shuffle(pick.begin(), pick.end());
    sub.reference.assign(pick.begin(), pick.begin() + static_cast<std::ptrdiff_t>(cfg.n_reference));
  }
  return sub;
}

inline defense::TrainConfig with_seed(defense::TrainConfig t, std::uint64_t seed,
                                      const defense::TrainerConfig& trainer, bool quiet) {
  t.seed = seed;
  t.trainer = trainer;
  if (quiet) t.log_every_epoch = false;
  return t;
}

// Float-rounds parameters or scores so files written from them reload to the
// very same values, and every consumer sees one canonical copy.
inline scoring::ScoreVector canonical(scoring::ScoreVector s) {
  for (double& v : s.values) v = static_cast<float>(v);
  return s;
}

// Lazily built artifacts of one subject, shared by all cells of a seed.
class SubjectModels {
 public:
  SubjectModels(const ExperimentConfig& cfg, const World& world, Subject subject)
      : cfg_(&cfg), world_(&world), subject_(std::move(subject)) {}

  const Subject& subject() const { return subject_; }

  nn::ModelSpec spec() const {
    return cfg_->model_spec(world_->pool.dim(), world_->pool.classes,
                            derive_seed(subject_.stream, "init"));
  }

  const ParameterVector& vanilla() {
    if (!vanilla_) vanilla_ = nn::init_params(spec());
    return *vanilla_;
  }

  // Plain-CE training from the vanilla initialization.
  const ParameterVector& unprotected() {
    if (!unprotected_) {
      ParameterVector p = vanilla();
      const auto tc = with_seed(cfg_->pretrain, derive_seed(subject_.stream, "pretrain"),
                                defense::PlainCe{}, subject_.test.empty());
      pretrain_log_ = defense::train(p, world_->pool, subject_.members, subject_.test, tc);
      unprotected_ = io::as_stored(std::move(p));
    }
    return *unprotected_;
  }

  // Uses persisted θ_vn / θ_up instead of recomputing them. θ_vn must match
  // the initialization this config and seed produce.
  void adopt(ParameterVector vanilla, ParameterVector unprotected) {
    if (!nn::bitwise_equal(vanilla, nn::init_params(spec()))) {
      throw FormatError(subject_.name + ": stored vanilla model does not match config and seed");
    }
    require(unprotected.layout == vanilla.layout, "adopt: layout mismatch");
    vanilla_ = std::move(vanilla);
    unprotected_ = std::move(unprotected);
  }

  const defense::RunLog& pretrain_log() {
    unprotected();
    return pretrain_log_;
  }

  // Trained from the vanilla initialization with the privacy trainer.
  const ParameterVector& trainer_only() {
    if (!trainer_only_) {
      ParameterVector p = vanilla();
      const auto tc = with_seed(cfg_->pretrain, derive_seed(subject_.stream, "trainer"),
                                cfg_->privacy_trainer, subject_.test.empty());
      defense::train(p, world_->pool, subject_.members, subject_.test, tc);
      trainer_only_ = io::as_stored(std::move(p));
    }
    return *trainer_only_;
  }

  const scoring::ScoreVector& privacy_scores() {
    if (!privacy_) {
      auto pve = cfg_->pve;
      pve.seed = derive_seed(subject_.stream, "pve");
      privacy_ = canonical(scoring::pve_scores(unprotected(), vanilla(), world_->pool,
                                               subject_.members, subject_.reference, pve));
    }
    return *privacy_;
  }

  const scoring::ScoreVector& learnability_scores() {
    if (!learnability_) {
      learnability_ = canonical(scoring::tfo_scores(
          unprotected(), world_->pool, subject_.members, cfg_->tfo_iterations, cfg_->tfo_lr,
          cfg_->tfo_batch_size, derive_seed(subject_.stream, "pve")));
    }
    return *learnability_;
  }

  defense::TrainConfig finetune_config(const std::string& tag,
                                       const defense::TrainerConfig& trainer) const {
    return finetune_config(cfg_->finetune, tag, trainer);
  }

  defense::TrainConfig finetune_config(const defense::TrainConfig& base, const std::string& tag,
                                       const defense::TrainerConfig& trainer) const {
    return with_seed(base, derive_seed(subject_.stream, tag), trainer, subject_.test.empty());
  }

  const ExperimentConfig& config() const { return *cfg_; }

  defense::CwrfResult cwrf(double rate) {
    auto ft = finetune_config("finetune", cfg_->privacy_trainer);
    auto res = defense::run_cwrf(unprotected(), vanilla(), world_->pool, splits_view(),
                                 privacy_scores(), rate, ft);
    res.params = io::as_stored(std::move(res.params));
    return res;
  }

  ParameterVector defended(DefenseFamily family, double rate) {
    switch (family) {
      case DefenseFamily::none: return unprotected();
      case DefenseFamily::trainer: return trainer_only();
      case DefenseFamily::trainer_cwrf: return cwrf(rate).params;
    }
    return unprotected();
  }

  // Splits as seen by this subject (members/reference/test of its own).
  data::DatasetSplits splits_view() const {
    return {subject_.members, subject_.reference, subject_.test, world_->splits.seed};
  }

 private:
  const ExperimentConfig* cfg_;
  const World* world_;
  Subject subject_;
  std::optional<ParameterVector> vanilla_;
  std::optional<ParameterVector> unprotected_;
  std::optional<ParameterVector> trainer_only_;
  std::optional<scoring::ScoreVector> privacy_;
  std::optional<scoring::ScoreVector> learnability_;
  defense::RunLog pretrain_log_;
};

// ---- result records -------------------------------------------------------

struct AttackSummary {
  double auc = 0.5;
  std::vector<mia::TprAtFpr> tpr_at;
};

struct ResultRecord {
  std::string defense;  // "none", trainer name, or "<trainer>+cwrf"
  DefenseFamily family = DefenseFamily::none;
  std::optional<double> rate;
  std::uint64_t seed = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  std::map<std::string, AttackSummary> attacks;
  double runtime_s = 0.0;
};

inline std::string defense_label(const ExperimentConfig& cfg, DefenseFamily f) {
  switch (f) {
    case DefenseFamily::none: return "none";
    case DefenseFamily::trainer: return defense::trainer_name(cfg.privacy_trainer);
    case DefenseFamily::trainer_cwrf: return defense::trainer_name(cfg.privacy_trainer) + "+cwrf";
  }
  return "?";
}

inline nlohmann::json to_json(const ResultRecord& r) {
  nlohmann::json attacks = nlohmann::json::object();
  for (const auto& [name, a] : r.attacks) {
    nlohmann::json tprs = nlohmann::json::array();
    for (const auto& t : a.tpr_at) {
      tprs.push_back({{"fpr", t.fpr}, {"tpr", t.tpr}, {"supported", t.supported}});
    }
    attacks[name] = {{"auc", a.auc}, {"tpr_at_fpr", tprs}};
  }
  return {{"defense", r.defense},
          {"family", to_string(r.family)},
          {"r", r.rate ? nlohmann::json(*r.rate) : nlohmann::json(nullptr)},
          {"seed", r.seed},
          {"train_acc", r.train_acc},
          {"test_acc", r.test_acc},
          {"train_loss", r.train_loss},
          {"test_loss", r.test_loss},
          {"attacks", attacks},
          {"runtime_s", r.runtime_s}};
}

inline ResultRecord record_from_json(const nlohmann::json& j) {
  try {
    ResultRecord r;
    r.defense = j.at("defense").get<std::string>();
    r.family = defense_family_from_string(j.at("family").get<std::string>());
    if (!j.at("r").is_null()) r.rate = j.at("r").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.train_acc = j.at("train_acc").get<double>();
    r.test_acc = j.at("test_acc").get<double>();
    r.train_loss = j.at("train_loss").get<double>();
    r.test_loss = j.at("test_loss").get<double>();
    for (const auto& [name, a] : j.at("attacks").items()) {
      AttackSummary s;
      s.auc = a.at("auc").get<double>();
      for (const auto& t : a.at("tpr_at_fpr")) {
        s.tpr_at.push_back({t.at("fpr").get<double>(), t.at("tpr").get<double>(),
                            t.at("supported").get<bool>()});
      }
      r.attacks[name] = std::move(s);
    }
    r.runtime_s = j.value("runtime_s", 0.0);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("result record: ") + e.what());
  }
}

// Everything except runtime, which is wall-clock and not reproducible.
inline bool same_results(const ResultRecord& a, const ResultRecord& b) {
  auto ja = to_json(a);
  auto jb = to_json(b);
  ja.erase("runtime_s");
  jb.erase("runtime_s");
  return ja == jb;
}

// ---- per-seed laboratory ---------------------------------------------------

struct CellResult {
  ResultRecord record;
  ParameterVector target;
  std::vector<mia::AttackResult> attacks;
};

// Target plus shadows of one seed. Shadows are trained with the defense under
// evaluation (adaptive attacker); their undefended base models and scores are
// shared by every cell.
class SeedLab {
 public:
  SeedLab(const ExperimentConfig& cfg, std::uint64_t seed)
      : cfg_(cfg), world_(make_world(cfg, seed)), plan_(shadow_plan(cfg, world_)),
        target_(std::make_unique<SubjectModels>(cfg_, world_, target_subject(world_))) {
    for (std::size_t s = 0; s < plan_.n_shadow(); ++s) {
      shadows_.push_back(
          std::make_unique<SubjectModels>(cfg_, world_, shadow_subject(cfg_, world_, plan_, s)));
    }
  }

  SeedLab(const SeedLab&) = delete;
  SeedLab& operator=(const SeedLab&) = delete;

  const ExperimentConfig& config() const { return cfg_; }
  const World& world() const { return world_; }
  const data::ShadowSplitPlan& plan() const { return plan_; }
  SubjectModels& target() { return *target_; }
  SubjectModels& shadow(std::size_t s) { return *shadows_.at(s); }

  mia::ShadowEnsemble ensemble(DefenseFamily family, double rate) {
    return mia::train_shadows(
        plan_, world_.pool, world_.splits.test,
        [&](std::size_t s, std::span<const std::size_t>) {
          return shadows_[s]->defended(family, rate);
        },
        cfg_.workers);
  }

  CellResult run_cell(DefenseFamily family, std::optional<double> rate) {
    const auto start = std::chrono::steady_clock::now();
    const double r = rate.value_or(0.0);
    require(family != DefenseFamily::trainer_cwrf || rate.has_value(),
            "run_cell: CWRF cells need a rewind rate");
    CellResult cell;
    cell.target = target_->defended(family, r);
    const auto ens = ensemble(family, r);
    cell.attacks = mia::run_attacks(cell.target, world_.pool, plan_, ens, world_.splits.test,
                                    cfg_.attack);
    auto& rec = cell.record;
    rec.defense = defense_label(cfg_, family);
    rec.family = family;
    if (family == DefenseFamily::trainer_cwrf) rec.rate = r;
    rec.seed = world_.seed;
    const auto tr = defense::evaluate(cell.target, world_.pool, world_.splits.members);
    const auto te = defense::evaluate(cell.target, world_.pool, world_.splits.test);
    rec.train_acc = tr.accuracy;
    rec.test_acc = te.accuracy;
    rec.train_loss = tr.loss;
    rec.test_loss = te.loss;
    for (const auto& a : cell.attacks) {
      rec.attacks[mia::to_string(a.kind)] = {a.metrics.auc, a.metrics.tpr_at};
    }
    rec.runtime_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return cell;
  }

 private:
  const ExperimentConfig& cfg_;
  World world_;
  data::ShadowSplitPlan plan_;
  std::unique_ptr<SubjectModels> target_;
  std::vector<std::unique_ptr<SubjectModels>> shadows_;
};

// Cells of the defense factorial in deterministic (family, r) order.
inline std::vector<std::pair<DefenseFamily, std::optional<double>>> defense_cells(
    const ExperimentConfig& cfg) {
  std::vector<std::pair<DefenseFamily, std::optional<double>>> cells;
  for (auto f : cfg.defenses) {
    if (f == DefenseFamily::trainer_cwrf) {
      for (double r : cfg.rates) cells.emplace_back(f, r);
    } else {
      cells.emplace_back(f, std::nullopt);
    }
  }
  return cells;
}

// ---- aggregation ------------------------------------------------------------

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
  std::size_t n = 0;
};

inline MeanStd mean_std(std::span<const double> v) {
  MeanStd out;
  out.n = v.size();
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return out;
}

struct SummaryRow {
  std::string defense;
  DefenseFamily family = DefenseFamily::none;
  std::optional<double> rate;
  MeanStd test_acc;
  MeanStd train_acc;
  std::map<std::string, MeanStd> auc;
};

// Groups records by (defense, r) in first-appearance order.
inline std::vector<SummaryRow> summarize(std::span<const ResultRecord> records) {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<const ResultRecord*>> members;
  for (const auto& r : records) {
    std::size_t k = 0;
    for (; k < rows.size(); ++k) {
      if (rows[k].defense == r.defense && rows[k].rate == r.rate) break;
    }
    if (k == rows.size()) {
      rows.push_back({r.defense, r.family, r.rate, {}, {}, {}});
      members.emplace_back();
    }
    members[k].push_back(&r);
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::vector<double> te, tr;
    std::map<std::string, std::vector<double>> aucs;
    for (const auto* r : members[k]) {
      te.push_back(r->test_acc);
      tr.push_back(r->train_acc);
      for (const auto& [name, a] : r->attacks) aucs[name].push_back(a.auc);
    }
    rows[k].test_acc = mean_std(te);
    rows[k].train_acc = mean_std(tr);
    for (const auto& [name, v] : aucs) rows[k].auc[name] = mean_std(v);
  }
  return rows;
}

// Grid-search rule for the rewind rate: among CWRF rows whose mean test
// accuracy is within max_drop of the undefended mean, the lowest mean AUC of
// `attack`. Empty when there is no undefended row or no admissible rate.
inline std::optional<SummaryRow> select_rate(std::span<const SummaryRow> rows, double max_drop,
                                             const std::string& attack = "lira") {
  const SummaryRow* base = nullptr;
  for (const auto& r : rows) {
    if (r.family == DefenseFamily::none) base = &r;
  }
  if (!base) return std::nullopt;
  std::optional<SummaryRow> best;
  for (const auto& r : rows) {
    if (r.family != DefenseFamily::trainer_cwrf || !r.auc.count(attack)) continue;
    if (base->test_acc.mean - r.test_acc.mean > max_drop) continue;
    if (!best || r.auc.at(attack).mean < best->auc.at(attack).mean) best = r;
  }
  return best;
}

// ---- pruning sweep and scenarios ------------------------------------------

struct SweepRow {
  double sparsity = 0.0;
  defense::Evaluation pruned_train, pruned_test;  // right after pruning
  defense::Evaluation train, test;                // after fine-tuning the survivors
};

// One-shot learnability pruning of θ_up per sparsity, then plain-CE fine-tuning
// of the kept weights. Sparsity 0 prunes nothing and is reported as θ_up.
inline std::vector<SweepRow> pruning_sweep(SubjectModels& target, const World& w,
                                           std::span<const double> sparsities,
                                           std::size_t workers = 1) {
  const auto& up = target.unprotected();
  const auto& scores = target.learnability_scores();
  const auto ft = target.finetune_config(target.config().sweep_finetune, "prune-finetune",
                                         defense::PlainCe{});
  std::vector<SweepRow> rows(sparsities.size());
  parallel_for(sparsities.size(), workers, [&](std::size_t k) {
    SweepRow row;
    row.sparsity = sparsities[k];
    ParameterVector p = up;
    if (row.sparsity > 0.0) {
      p = scoring::prune_oneshot(up, scores, row.sparsity);
      row.pruned_train = defense::evaluate(p, w.pool, w.splits.members);
      row.pruned_test = defense::evaluate(p, w.pool, w.splits.test);
      const auto keep = scoring::prune_keep_mask(scores, row.sparsity);
      defense::train(p, w.pool, w.splits.members, w.splits.test, ft, keep);
    } else {
      row.pruned_train = defense::evaluate(p, w.pool, w.splits.members);
      row.pruned_test = defense::evaluate(p, w.pool, w.splits.test);
    }
    row.train = defense::evaluate(p, w.pool, w.splits.members);
    row.test = defense::evaluate(p, w.pool, w.splits.test);
    rows[k] = row;
  });
  return rows;
}

inline defense::ScenarioInputs scenario_inputs(const ExperimentConfig& cfg, SubjectModels& target,
                                               const World& w, const data::DatasetSplits& splits,
                                               double portion) {
  defense::ScenarioInputs in;
  in.unprotected = &target.unprotected();
  in.vanilla = &target.vanilla();
  in.pool = &w.pool;
  in.splits = &splits;
  in.learnability = &target.learnability_scores();
  in.privacy = &target.privacy_scores();
  in.retrain = target.finetune_config("retrain", defense::PlainCe{});
  in.retrain.epochs = cfg.pretrain.epochs;
  in.finetune = target.finetune_config("scenario", cfg.privacy_trainer);
  in.prune_sparsity = cfg.prune_sparsity;
  in.rate = portion;
  return in;
}

struct ScenarioTable {
  std::vector<defense::ScenarioResult> pruning;      // M1, M2, M3
  std::vector<defense::ScenarioResult> rewinding;    // (A1, A2, A3) per portion
  defense::Evaluation scratch_train, scratch_test;   // privacy trainer from scratch
};

inline ScenarioTable run_scenarios(const ExperimentConfig& cfg, SubjectModels& target,
                                   const World& w) {
  ScenarioTable t;
  const auto splits = w.splits;
  target.privacy_scores();
  target.learnability_scores();
  for (auto k : {defense::Scenario::M1, defense::Scenario::M2, defense::Scenario::M3}) {
    t.pruning.push_back(defense::run_scenario(k, scenario_inputs(cfg, target, w, splits, 0.05)));
  }
  std::vector<std::pair<defense::Scenario, double>> jobs;
  for (double portion : cfg.portions) {
    for (auto k : {defense::Scenario::A1, defense::Scenario::A2, defense::Scenario::A3}) {
      jobs.emplace_back(k, portion);
    }
  }
  t.rewinding.resize(jobs.size());
  parallel_for(jobs.size(), cfg.workers, [&](std::size_t j) {
    t.rewinding[j] = defense::run_scenario(
        jobs[j].first, scenario_inputs(cfg, target, w, splits, jobs[j].second));
  });
  const auto& scratch = target.trainer_only();
  t.scratch_train = defense::evaluate(scratch, w.pool, w.splits.members);
  t.scratch_test = defense::evaluate(scratch, w.pool, w.splits.test);
  return t;
}

}  // namespace cwrf::lab

#endif  // CWRF_EXPERIMENT_HPP_
