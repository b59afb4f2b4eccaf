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

// Subcommands of the experiment runner. Each one reads the config, reuses
// persisted artifacts when present and writes into the output directory:
//
//   config.cfg            resolved configuration
//   manifests/            split and shadow-plan JSON per seed
//   checkpoints/          θ_vn, θ_up, defended models, masks
//   scores/               learnability and privacy scores
//   records.jsonl         one ResultRecord per (defense, r, seed)
//   tables/, plots/       CSV tables and SVG figures
//   logs/                 per-epoch training logs (JSON lines)

#ifndef CWRF_COMMANDS_HPP_
#define CWRF_COMMANDS_HPP_

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cwrf/config.hpp"
#include "cwrf/experiment.hpp"
#include "cwrf/svg.hpp"

namespace cwrf::lab {

namespace fs = std::filesystem;

class Workspace {
 public:
  Workspace(const ExperimentConfig& cfg, const KeyValues& kv) : cfg_(cfg), root_(cfg.output_dir) {
    for (const char* d : {"manifests", "checkpoints", "scores", "tables", "plots", "logs"}) {
      fs::create_directories(root_ / d);
    }
    std::ofstream(root_ / "config.cfg") << kv.dump();
  }

  const fs::path& root() const { return root_; }
  fs::path seed_dir(const char* area, std::uint64_t seed) const {
    auto p = root_ / area / ("seed" + std::to_string(seed));
    fs::create_directories(p);
    return p;
  }
  fs::path vanilla_path(std::uint64_t seed) const {
    return seed_dir("checkpoints", seed) / "vanilla.cwrf";
  }
  fs::path unprotected_path(std::uint64_t seed) const {
    return seed_dir("checkpoints", seed) / "unprotected.cwrf";
  }
  fs::path records_path() const { return root_ / "records.jsonl"; }

  // Loads θ_vn/θ_up into the target when pretrain has run for this seed.
  bool adopt_pretrained(SeedLab& lab) const {
    const auto seed = lab.world().seed;
    if (!fs::exists(vanilla_path(seed)) || !fs::exists(unprotected_path(seed))) return false;
    lab.target().adopt(io::load_parameters(vanilla_path(seed)),
                       io::load_parameters(unprotected_path(seed)));
    return true;
  }

 private:
  const ExperimentConfig& cfg_;
  fs::path root_;
};

namespace detail {

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

inline std::string rate_tag(double r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "r%.4f", r);
  return buf;
}

inline std::string num(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

inline void log_line(const std::string& msg) { std::cerr << "[cwrf-lab] " << msg << '\n'; }

}  // namespace detail

// ---- pretrain ---------------------------------------------------------------

inline int cmd_pretrain(const ExperimentConfig& cfg, const Workspace& ws) {
  for (auto seed : cfg.seeds) {
    SeedLab lab(cfg, seed);
    const auto mdir = ws.seed_dir("manifests", seed);
    detail::write_text(mdir / "splits.json", data::to_json(lab.world().splits).dump(1));
    detail::write_text(mdir / "shadows.json", data::to_json(lab.plan()).dump(1));
    auto& target = lab.target();
    io::save_parameters(ws.vanilla_path(seed), target.vanilla());
    io::save_parameters(ws.unprotected_path(seed), target.unprotected());
    std::ofstream log(ws.seed_dir("logs", seed) / "pretrain.jsonl");
    defense::write_jsonl(log, target.pretrain_log());
    if (!nn::bitwise_equal(io::load_parameters(ws.vanilla_path(seed)),
                           nn::init_params(target.spec()))) {
      throw FormatError("vanilla checkpoint does not reproduce from (spec, seed)");
    }
    const auto tr = defense::evaluate(target.unprotected(), lab.world().pool,
                                      lab.world().splits.members);
    const auto te = defense::evaluate(target.unprotected(), lab.world().pool,
                                      lab.world().splits.test);
    detail::log_line("seed " + std::to_string(seed) + ": train acc " + detail::num(tr.accuracy) +
                     ", test acc " + detail::num(te.accuracy));
  }
  return 0;
}

// ---- score --------------------------------------------------------------------

inline int cmd_score(const ExperimentConfig& cfg, const Workspace& ws) {
  for (auto seed : cfg.seeds) {
    SeedLab lab(cfg, seed);
    ws.adopt_pretrained(lab);
    const auto dir = ws.seed_dir("scores", seed);
    scoring::save_scores(dir / "privacy.cwrf", lab.target().privacy_scores());
    scoring::save_scores(dir / "learnability.cwrf", lab.target().learnability_scores());
  }
  return 0;
}

// ---- correlate ------------------------------------------------------------------

inline int cmd_correlate(const ExperimentConfig& cfg, const Workspace& ws) {
  std::ostringstream csv;
  csv << "seed,group,count,proportion,pcc\n";
  for (auto seed : cfg.seeds) {
    SeedLab lab(cfg, seed);
    ws.adopt_pretrained(lab);
    auto& t = lab.target();
    const auto rep = scoring::correlation_report(t.learnability_scores(), t.privacy_scores());
    for (const auto& row : rep.rows) {
      csv << seed << ',' << scoring::to_string(row.group) << ',' << row.count << ','
          << detail::num(row.proportion) << ',' << (row.pcc ? detail::num(*row.pcc) : "") << '\n';
      if (row.group == scoring::ParamGroup::all || row.count == 0) continue;
      svg::Series s;
      s.name = scoring::to_string(row.group);
      s.marker_radius = 1.5;
      for (auto i : scoring::group_indices(rep.learnability.layout, row.group)) {
        s.points.push_back({rep.learnability.values[i], rep.privacy.values[i]});
      }
      s.points = svg::subsample(s.points, 50000);
      svg::Plot plot;
      char title[160];
      std::snprintf(title, sizeof(title), "%s weights (%.1f%% of m), PCC %s",
                    s.name.c_str(), 100.0 * row.proportion,
                    row.pcc ? detail::num(*row.pcc).c_str() : "n/a");
      plot.title = title;
      plot.x.label = "learnability score";
      plot.y.label = "privacy vulnerability score";
      plot.series.push_back(std::move(s));
      detail::write_text(ws.root() / "plots" /
                             ("correlation_seed" + std::to_string(seed) + "_" +
                              scoring::to_string(row.group) + ".svg"),
                         svg::render(plot));
    }
  }
  detail::write_text(ws.root() / "tables" / "correlation.csv", csv.str());
  return 0;
}

// ---- sweep-pruning -----------------------------------------------------------------

inline int cmd_sweep_pruning(const ExperimentConfig& cfg, const Workspace& ws) {
  std::ostringstream csv;
  csv << "seed,sparsity,pruned_train_acc,pruned_test_acc,train_acc,test_acc,train_ce,test_ce\n";
  std::vector<std::vector<SweepRow>> all;
  for (auto seed : cfg.seeds) {
    SeedLab lab(cfg, seed);
    ws.adopt_pretrained(lab);
    auto rows = pruning_sweep(lab.target(), lab.world(), cfg.sparsities, cfg.workers);
    for (const auto& r : rows) {
      csv << seed << ',' << detail::num(r.sparsity) << ',' << detail::num(r.pruned_train.accuracy)
          << ',' << detail::num(r.pruned_test.accuracy) << ',' << detail::num(r.train.accuracy)
          << ',' << detail::num(r.test.accuracy) << ',' << detail::num(r.train.loss) << ','
          << detail::num(r.test.loss) << '\n';
    }
    all.push_back(std::move(rows));
  }
  detail::write_text(ws.root() / "tables" / "sweep_pruning.csv", csv.str());

  auto mean_over_seeds = [&](auto field) {
    std::vector<svg::Point> pts;
    for (std::size_t k = 0; k < cfg.sparsities.size(); ++k) {
      double sum = 0.0;
      for (const auto& rows : all) sum += field(rows[k]);
      pts.push_back({100.0 * cfg.sparsities[k], sum / static_cast<double>(all.size())});
    }
    return pts;
  };
  const auto& pal = svg::palette();
  svg::Plot acc;
  acc.title = "Accuracy after one-shot pruning and fine-tuning";
  acc.x.label = "sparsity (%)";
  acc.y.label = "accuracy";
  acc.series = {{"train", pal[0], mean_over_seeds([](const SweepRow& r) { return r.train.accuracy; }), true},
                {"test", pal[1], mean_over_seeds([](const SweepRow& r) { return r.test.accuracy; }), true}};
  detail::write_text(ws.root() / "plots" / "sweep_accuracy.svg", svg::render(acc));
  svg::Plot ce;
  ce.title = "Cross-entropy after one-shot pruning and fine-tuning";
  ce.x.label = "sparsity (%)";
  ce.y.label = "cross-entropy";
  ce.series = {{"train", pal[0], mean_over_seeds([](const SweepRow& r) { return r.train.loss; }), true},
               {"test", pal[1], mean_over_seeds([](const SweepRow& r) { return r.test.loss; }), true}};
  detail::write_text(ws.root() / "plots" / "sweep_ce.svg", svg::render(ce));
  return 0;
}

// ---- cwrf -----------------------------------------------------------------------

inline int cmd_cwrf(const ExperimentConfig& cfg, const Workspace& ws) {
  std::ostringstream csv;
  csv << "seed,r,rewound,threshold,train_acc,test_acc,train_ce,test_ce\n";
  for (auto seed : cfg.seeds) {
    SeedLab lab(cfg, seed);
    ws.adopt_pretrained(lab);
    for (double r : cfg.rates) {
      auto res = lab.target().cwrf(r);
      const auto tag = detail::rate_tag(r);
      const auto cdir = ws.seed_dir("checkpoints", seed);
      io::save_parameters(cdir / ("cwrf_" + tag + ".cwrf"), res.params);
      defense::save_masks(cdir / ("masks_" + tag + ".cwrf"), res.masks);
      std::ofstream log(ws.seed_dir("logs", seed) / ("cwrf_" + tag + ".jsonl"));
      defense::write_jsonl(log, res.log);
      const auto& w = lab.world();
      const auto tr = defense::evaluate(res.params, w.pool, w.splits.members);
      const auto te = defense::evaluate(res.params, w.pool, w.splits.test);
      csv << seed << ',' << detail::num(r) << ',' << res.masks.rewound_count() << ','
          << detail::num(res.masks.threshold) << ',' << detail::num(tr.accuracy) << ','
          << detail::num(te.accuracy) << ',' << detail::num(tr.loss) << ','
          << detail::num(te.loss) << '\n';
    }
  }
  detail::write_text(ws.root() / "tables" / "cwrf.csv", csv.str());
  return 0;
}

// ---- attack ---------------------------------------------------------------------

inline svg::Plot roc_plot(const std::string& title, std::span<const mia::AttackResult> results) {
  svg::Plot plot;
  plot.title = title;
  plot.x = {"false positive rate", true, 1e-3, 1.0};
  plot.y = {"true positive rate", true, 1e-3, 1.0};
  plot.diagonal = true;
  const auto& pal = svg::palette();
  for (std::size_t k = 0; k < results.size(); ++k) {
    svg::Series s;
    s.name = mia::to_string(results[k].kind) + " (AUC " + detail::num(results[k].metrics.auc).substr(0, 5) + ")";
    s.color = pal[k % pal.size()];
    s.line = true;
    for (const auto& p : results[k].metrics.roc) {
      s.points.push_back({std::max(p.fpr, 1e-3), std::max(p.tpr, 1e-3)});
    }
    plot.series.push_back(std::move(s));
  }
  return plot;
}

inline void write_attack_outputs(const Workspace& ws, const std::string& stem,
                                 std::span<const mia::AttackResult> results) {
  nlohmann::json metrics = nlohmann::json::object();
  for (const auto& a : results) {
    std::ostringstream csv;
    csv << "example,label,score\n";
    for (std::size_t i = 0; i < a.scores.size(); ++i) {
      csv << a.examples[i] << ',' << static_cast<int>(a.labels[i]) << ',' << detail::num(a.scores[i])
          << '\n';
    }
    detail::write_text(ws.root() / "tables" / (stem + "_" + mia::to_string(a.kind) + ".csv"),
                       csv.str());
    nlohmann::json tprs = nlohmann::json::array();
    for (const auto& t : a.metrics.tpr_at) {
      tprs.push_back({{"fpr", t.fpr}, {"tpr", t.tpr}, {"supported", t.supported}});
    }
    metrics[mia::to_string(a.kind)] = {{"auc", a.metrics.auc}, {"tpr_at_fpr", tprs}};
  }
  detail::write_text(ws.root() / "tables" / (stem + ".json"), metrics.dump(1));
  detail::write_text(ws.root() / "plots" / ("roc_" + stem + ".svg"),
                     svg::render(roc_plot("ROC " + stem, results)));
}

// Attacks the undefended target of every seed.
inline int cmd_attack(const ExperimentConfig& cfg, const Workspace& ws) {
  for (auto seed : cfg.seeds) {
    SeedLab lab(cfg, seed);
    ws.adopt_pretrained(lab);
    const auto cell = lab.run_cell(DefenseFamily::none, std::nullopt);
    write_attack_outputs(ws, "attack_seed" + std::to_string(seed), cell.attacks);
    for (const auto& [name, a] : cell.record.attacks) {
      detail::log_line("seed " + std::to_string(seed) + " " + name + " AUC " + detail::num(a.auc));
    }
  }
  return 0;
}

// ---- defend -----------------------------------------------------------------------

// Full factorial over defenses × r × seeds. Returns 0 only if every cell ran.
inline int cmd_defend(const ExperimentConfig& cfg, const Workspace& ws) {
  std::ofstream out(ws.records_path(), std::ios::trunc);
  std::size_t failed = 0;
  for (auto seed : cfg.seeds) {
    SeedLab lab(cfg, seed);
    ws.adopt_pretrained(lab);
    for (const auto& [family, rate] : defense_cells(cfg)) {
      try {
        auto cell = lab.run_cell(family, rate);
        out << to_json(cell.record).dump() << '\n';
        out.flush();
        std::string stem = cell.record.defense + "_seed" + std::to_string(seed);
        if (rate) stem += "_" + detail::rate_tag(*rate);
        write_attack_outputs(ws, stem, cell.attacks);
        detail::log_line(stem + ": test acc " + detail::num(cell.record.test_acc));
      } catch (const std::exception& e) {
        ++failed;
        detail::log_line("cell " + defense_label(cfg, family) + " seed " + std::to_string(seed) +
                         " failed: " + e.what());
      }
    }
  }
  return failed == 0 ? 0 : 1;
}

// ---- scenarios ----------------------------------------------------------------------

inline int cmd_scenarios(const ExperimentConfig& cfg, const Workspace& ws) {
  std::ostringstream csv;
  csv << "seed,scenario,portion,train_acc,test_acc,train_ce,test_ce\n";
  std::vector<ScenarioTable> tables;
  for (auto seed : cfg.seeds) {
    SeedLab lab(cfg, seed);
    ws.adopt_pretrained(lab);
    auto t = run_scenarios(cfg, lab.target(), lab.world());
    auto emit = [&](const std::string& name, const std::string& portion,
                    const defense::Evaluation& tr, const defense::Evaluation& te) {
      csv << seed << ',' << name << ',' << portion << ',' << detail::num(tr.accuracy) << ','
          << detail::num(te.accuracy) << ',' << detail::num(tr.loss) << ','
          << detail::num(te.loss) << '\n';
    };
    for (const auto& s : t.pruning) emit(defense::to_string(s.kind), "", s.train, s.test);
    for (const auto& s : t.rewinding) {
      emit(defense::to_string(s.kind), detail::num(s.rate), s.train, s.test);
    }
    emit("scratch", "", t.scratch_train, t.scratch_test);
    tables.push_back(std::move(t));
  }
  detail::write_text(ws.root() / "tables" / "scenarios.csv", csv.str());

  svg::Plot plot;
  plot.title = "Test accuracy after removing or rewinding vulnerable weights";
  plot.x = {"portion (%)", true, 0.0, 0.0};
  plot.y.label = "test accuracy";
  const auto& pal = svg::palette();
  for (int k = 0; k < 3; ++k) {
    svg::Series s;
    s.name = defense::to_string(static_cast<defense::Scenario>(3 + k));
    s.color = pal[k];
    s.line = true;
    for (std::size_t p = 0; p < cfg.portions.size(); ++p) {
      double sum = 0.0;
      for (const auto& t : tables) sum += t.rewinding[3 * p + k].test.accuracy;
      s.points.push_back({100.0 * cfg.portions[p], sum / static_cast<double>(tables.size())});
    }
    plot.series.push_back(std::move(s));
  }
  svg::Series base{"scratch (" + defense::trainer_name(cfg.privacy_trainer) + ")", pal[3], {}, true};
  double sum = 0.0;
  for (const auto& t : tables) sum += t.scratch_test.accuracy;
  for (double p : cfg.portions) base.points.push_back({100.0 * p, sum / static_cast<double>(tables.size())});
  plot.series.push_back(std::move(base));
  detail::write_text(ws.root() / "plots" / "scenarios_accuracy.svg", svg::render(plot));
  return 0;
}

// ---- report ------------------------------------------------------------------------

inline std::vector<ResultRecord> read_records(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("no records at " + path.string() + " (run defend first)");
  std::vector<ResultRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(record_from_json(nlohmann::json::parse(line)));
  }
  return out;
}

inline nlohmann::json to_json(const MeanStd& m) {
  return {{"mean", m.mean}, {"std", m.std}, {"n", m.n}};
}

inline svg::Plot privacy_utility_plot(std::span<const ResultRecord> records,
                                      const std::string& attack) {
  svg::Plot plot;
  plot.title = "Privacy-utility (" + attack + ")";
  plot.x.label = attack + " AUC";
  plot.y.label = "test accuracy";
  const auto& pal = svg::palette();
  for (auto f : {DefenseFamily::none, DefenseFamily::trainer, DefenseFamily::trainer_cwrf}) {
    svg::Series s;
    s.name = to_string(f);
    s.color = pal[static_cast<std::size_t>(f)];
    s.marker_radius = 4.0;
    for (const auto& r : records) {
      if (r.family != f || !r.attacks.count(attack)) continue;
      s.points.push_back({r.attacks.at(attack).auc, r.test_acc});
    }
    if (!s.points.empty()) plot.series.push_back(std::move(s));
  }
  return plot;
}

// Pure function of records.jsonl: writes report.json and the privacy-utility plot.
inline int cmd_report(const ExperimentConfig& cfg, const Workspace& ws) {
  const auto records = read_records(ws.records_path());
  if (records.empty()) throw std::runtime_error("report: no result records");
  const auto rows = summarize(records);
  nlohmann::json jrows = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json aucs = nlohmann::json::object();
    for (const auto& [name, m] : r.auc) aucs[name] = to_json(m);
    jrows.push_back({{"defense", r.defense},
                     {"family", to_string(r.family)},
                     {"r", r.rate ? nlohmann::json(*r.rate) : nlohmann::json(nullptr)},
                     {"test_acc", to_json(r.test_acc)},
                     {"train_acc", to_json(r.train_acc)},
                     {"auc", aucs}});
  }
  nlohmann::json report{{"records", records.size()}, {"rows", jrows}};
  if (const auto sel = select_rate(rows, cfg.max_accuracy_drop)) {
    report["selected_r"] = *sel->rate;
  } else {
    report["selected_r"] = nullptr;
  }
  detail::write_text(ws.root() / "report.json", report.dump(1));
  std::set<std::string> attacks;
  for (const auto& r : records) {
    for (const auto& [name, a] : r.attacks) attacks.insert(name);
  }
  for (const auto& a : attacks) {
    detail::write_text(ws.root() / "plots" / ("privacy_utility_" + a + ".svg"),
                       svg::render(privacy_utility_plot(records, a)));
  }
  return 0;
}

}  // namespace cwrf::lab

#endif  // CWRF_COMMANDS_HPP_
