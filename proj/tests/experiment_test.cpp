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

#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "cwrf/experiment.hpp"

namespace cwrf::lab {
namespace {

ExperimentConfig tiny(const std::string& extra = "") {
  std::istringstream in(
      "seeds = 1\n"
      "synthetic.classes = 3\nsynthetic.dim = 6\nsynthetic.per_class = 40\n"
      "splits.members = 30\nsplits.reference = 10\nsplits.test = 30\n"
      "model.hidden = 12\n"
      "pretrain.epochs = 15\npretrain.batch_size = 16\npretrain.lr = 0.01\n"
      "finetune.epochs = 4\nfinetune.batch_size = 16\nfinetune.lr = 0.001\n"
      "pve.iterations = 3\npve.batch_size = 16\ntfo.iterations = 3\ntfo.batch_size = 16\n"
      "cwrf.rates = 0.05,0.1\nattack.n_shadow = 2\n" +
      extra);
  return to_experiment_config(KeyValues::parse(in));
}

TEST(World, SplitsAreDisjointAndUnusedIsTheRest) {
  const auto cfg = tiny();
  const auto w = make_world(cfg, 1);
  std::set<std::size_t> seen;
  for (const auto* part : {&w.splits.members, &w.splits.reference, &w.splits.test, &w.unused}) {
    for (auto i : *part) EXPECT_TRUE(seen.insert(i).second);
  }
  EXPECT_EQ(seen.size(), w.pool.size());
  EXPECT_EQ(w.splits.members.size(), 30u);
  const auto again = make_world(cfg, 1);
  EXPECT_EQ(again.splits.members, w.splits.members);
  EXPECT_TRUE(nn::bitwise_equal(again.pool.features.data(), w.pool.features.data()));
  EXPECT_NE(make_world(cfg, 2).splits.members, w.splits.members);
}

TEST(ShadowSubject, ReferenceReuseOrResample) {
  const auto reuse = tiny();
  const auto w = make_world(reuse, 1);
  const auto plan = shadow_plan(reuse, w);
  const auto a = shadow_subject(reuse, w, plan, 0);
  EXPECT_EQ(a.reference, w.splits.reference);
  EXPECT_EQ(a.members, plan.members[0]);
  EXPECT_TRUE(a.test.empty());

  const auto resample = tiny("attack.shadow_reference = resample\n");
  const auto b0 = shadow_subject(resample, w, plan, 0);
  const auto b1 = shadow_subject(resample, w, plan, 1);
  ASSERT_EQ(b0.reference.size(), 10u);
  const std::set<std::size_t> unused(w.unused.begin(), w.unused.end());
  for (auto i : b0.reference) EXPECT_TRUE(unused.count(i));
  EXPECT_NE(b0.reference, b1.reference);
  EXPECT_NE(b0.stream, b1.stream);
}

TEST(SubjectModels, LazyCanonicalArtifacts) {
  const auto cfg = tiny();
  const auto w = make_world(cfg, 1);
  SubjectModels t(cfg, w, target_subject(w));
  EXPECT_TRUE(nn::bitwise_equal(t.vanilla(), nn::init_params(t.spec())));
  const auto& up = t.unprotected();
  EXPECT_EQ(&up, &t.unprotected());
  for (double v : up.values) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
  EXPECT_FALSE(nn::bitwise_equal(up, t.vanilla()));
  EXPECT_EQ(t.pretrain_log().size(), cfg.pretrain.epochs);
  for (double v : t.privacy_scores().values) EXPECT_EQ(v, static_cast<double>(static_cast<float>(v)));
  EXPECT_EQ(t.privacy_scores().values.size(), up.size());
  EXPECT_EQ(t.learnability_scores().values.size(), up.size());
}

TEST(SubjectModels, AdoptChecksTheVanillaModel) {
  const auto cfg = tiny();
  const auto w = make_world(cfg, 1);
  SubjectModels a(cfg, w, target_subject(w));
  SubjectModels b(cfg, w, target_subject(w));
  b.adopt(a.vanilla(), a.unprotected());
  EXPECT_TRUE(nn::bitwise_equal(b.unprotected(), a.unprotected()));
  SubjectModels c(cfg, w, target_subject(w));
  auto wrong = a.vanilla();
  wrong.values[0] += 1.0;
  EXPECT_THROW(c.adopt(wrong, a.unprotected()), FormatError);
}

TEST(SubjectModels, DefendedFamilies) {
  const auto cfg = tiny();
  const auto w = make_world(cfg, 1);
  SubjectModels t(cfg, w, target_subject(w));
  EXPECT_TRUE(nn::bitwise_equal(t.defended(DefenseFamily::none, 0.0), t.unprotected()));
  EXPECT_TRUE(nn::bitwise_equal(t.defended(DefenseFamily::trainer, 0.0), t.trainer_only()));
  const auto res = t.cwrf(0.1);
  const auto& vn = t.vanilla();
  for (std::size_t i = 0; i < vn.size(); ++i) {
    if (res.masks.rewind[i]) {
      EXPECT_EQ(res.params.values[i], vn.values[i]);
    }
  }
  EXPECT_TRUE(nn::bitwise_equal(t.defended(DefenseFamily::trainer_cwrf, 0.1), res.params));
}

TEST(DefenseCells, FactorialOrder) {
  const auto cells = defense_cells(tiny());
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(cells[0].first, DefenseFamily::none);
  EXPECT_FALSE(cells[0].second.has_value());
  EXPECT_EQ(cells[1].first, DefenseFamily::trainer);
  EXPECT_EQ(cells[2].first, DefenseFamily::trainer_cwrf);
  EXPECT_EQ(*cells[2].second, 0.05);
  EXPECT_EQ(*cells[3].second, 0.1);
}

TEST(SeedLab, CellsAreReproducible) {
  const auto cfg = tiny();
  SeedLab a(cfg, 1);
  SeedLab b(cfg, 1);
  for (const auto& [family, rate] : defense_cells(cfg)) {
    const auto x = a.run_cell(family, rate);
    const auto y = b.run_cell(family, rate);
    EXPECT_TRUE(same_results(x.record, y.record)) << to_json(x.record).dump();
    EXPECT_TRUE(nn::bitwise_equal(x.target, y.target));
    EXPECT_EQ(x.record.attacks.size(), 3u);
    for (const auto& [name, s] : x.record.attacks) {
      EXPECT_GE(s.auc, 0.0);
      EXPECT_LE(s.auc, 1.0);
    }
  }
  EXPECT_THROW(a.run_cell(DefenseFamily::trainer_cwrf, std::nullopt), std::invalid_argument);
}

TEST(SeedLab, WorkerCountDoesNotChangeResults) {
  const auto one = tiny();
  const auto four = tiny("workers = 4\n");
  SeedLab a(one, 1);
  SeedLab b(four, 1);
  const auto x = a.run_cell(DefenseFamily::trainer_cwrf, 0.05);
  const auto y = b.run_cell(DefenseFamily::trainer_cwrf, 0.05);
  EXPECT_TRUE(same_results(x.record, y.record));
}

ResultRecord record(const std::string& defense, DefenseFamily f, std::optional<double> r,
                    std::uint64_t seed, double test_acc, double lira) {
  ResultRecord rec;
  rec.defense = defense;
  rec.family = f;
  rec.rate = r;
  rec.seed = seed;
  rec.test_acc = test_acc;
  rec.train_acc = 1.0;
  rec.attacks["lira"] = {lira, {{0.1, 0.4, true}}};
  rec.runtime_s = static_cast<double>(seed);
  return rec;
}

TEST(ResultRecord, JsonRoundTripAndComparison) {
  const auto a = record("relaxloss+cwrf", DefenseFamily::trainer_cwrf, 0.05, 3, 0.7, 0.61);
  const auto back = record_from_json(nlohmann::json::parse(to_json(a).dump()));
  EXPECT_TRUE(same_results(a, back));
  EXPECT_EQ(back.rate, a.rate);
  auto b = a;
  b.runtime_s += 100.0;
  EXPECT_TRUE(same_results(a, b));
  b.test_acc += 1e-12;
  EXPECT_FALSE(same_results(a, b));
  const auto none = record("none", DefenseFamily::none, std::nullopt, 1, 0.7, 0.6);
  EXPECT_TRUE(to_json(none).at("r").is_null());
  EXPECT_THROW(record_from_json(nlohmann::json::parse("{\"defense\": 1}")), FormatError);
}

TEST(MeanStd, SampleStandardDeviation) {
  const std::vector<double> v{1.0, 2.0, 3.0, 6.0};
  const auto m = mean_std(v);
  EXPECT_DOUBLE_EQ(m.mean, 3.0);
  EXPECT_DOUBLE_EQ(m.std, std::sqrt(14.0 / 3.0));
  EXPECT_EQ(m.n, 4u);
  EXPECT_EQ(mean_std(std::vector<double>{5.0}).std, 0.0);
}

std::vector<ResultRecord> grid() {
  std::vector<ResultRecord> recs;
  for (std::uint64_t s : {1, 2}) {
    const double d = s == 1 ? 0.01 : -0.01;
    recs.push_back(record("none", DefenseFamily::none, std::nullopt, s, 0.80 + d, 0.80));
    recs.push_back(record("relaxloss", DefenseFamily::trainer, std::nullopt, s, 0.70, 0.50));
    recs.push_back(record("relaxloss+cwrf", DefenseFamily::trainer_cwrf, 0.01, s, 0.79, 0.70));
    recs.push_back(record("relaxloss+cwrf", DefenseFamily::trainer_cwrf, 0.03, s, 0.775, 0.65));
    recs.push_back(record("relaxloss+cwrf", DefenseFamily::trainer_cwrf, 0.05, s, 0.76, 0.55));
  }
  return recs;
}

TEST(Summarize, GroupsByDefenseAndRate) {
  const auto recs = grid();
  const auto rows = summarize(recs);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].defense, "none");
  EXPECT_DOUBLE_EQ(rows[0].test_acc.mean, 0.80);
  EXPECT_NEAR(rows[0].test_acc.std, std::sqrt(2.0) * 0.01, 1e-12);
  EXPECT_EQ(rows[0].test_acc.n, 2u);
  EXPECT_EQ(*rows[3].rate, 0.03);
  EXPECT_DOUBLE_EQ(rows[3].auc.at("lira").mean, 0.65);
}

TEST(SelectRate, LowestAucWithinTheAccuracyBudget) {
  const auto recs = grid();
  const auto rows = summarize(recs);
  // r = 0.05 has the lowest AUC but drops 4 points; r = 0.03 drops 2.5.
  const auto sel = select_rate(rows, 0.03);
  ASSERT_TRUE(sel.has_value());
  EXPECT_EQ(*sel->rate, 0.03);
  EXPECT_EQ(*select_rate(rows, 0.05)->rate, 0.05);
  EXPECT_EQ(*select_rate(rows, 0.015)->rate, 0.01);
  EXPECT_FALSE(select_rate(rows, 0.001).has_value());
  EXPECT_FALSE(select_rate(rows, 0.03, "rmia").has_value());
  std::vector<SummaryRow> no_base(rows.begin() + 1, rows.end());
  EXPECT_FALSE(select_rate(no_base, 1.0).has_value());
}

TEST(PruningSweep, ZeroSparsityIsTheUnprotectedModel) {
  const auto cfg = tiny();
  const auto w = make_world(cfg, 1);
  SubjectModels t(cfg, w, target_subject(w));
  const std::vector<double> sp{0.0, 0.5, 0.9};
  const auto rows = pruning_sweep(t, w, sp);
  ASSERT_EQ(rows.size(), 3u);
  const auto up = defense::evaluate(t.unprotected(), w.pool, w.splits.test);
  EXPECT_EQ(rows[0].test.loss, up.loss);
  EXPECT_EQ(rows[0].pruned_test.loss, up.loss);
  EXPECT_NE(rows[2].pruned_test.loss, rows[2].test.loss);
  const auto again = pruning_sweep(t, w, sp, 3);
  for (std::size_t k = 0; k < sp.size(); ++k) EXPECT_EQ(again[k].test.loss, rows[k].test.loss);
}

TEST(Scenarios, TableShape) {
  const auto cfg = tiny("scenarios.portions = 0.05,0.1\n");
  const auto w = make_world(cfg, 1);
  SubjectModels t(cfg, w, target_subject(w));
  const auto table = run_scenarios(cfg, t, w);
  ASSERT_EQ(table.pruning.size(), 3u);
  ASSERT_EQ(table.rewinding.size(), 6u);
  EXPECT_EQ(table.rewinding[0].kind, defense::Scenario::A1);
  EXPECT_EQ(table.rewinding[5].kind, defense::Scenario::A3);
  EXPECT_EQ(table.rewinding[5].rate, 0.1);
  EXPECT_TRUE(std::isfinite(table.scratch_test.accuracy));
}

}  // namespace
}  // namespace cwrf::lab
