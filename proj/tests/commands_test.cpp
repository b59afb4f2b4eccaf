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

// Drives the cwrf_lab executable end to end on a tiny configuration.

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cwrf/commands.hpp"
#include "test_support.hpp"

namespace cwrf::lab {
namespace {

namespace fs = std::filesystem;

const char* kTinyConfig =
    "seeds = 1\n"
    "synthetic.classes = 3\nsynthetic.dim = 6\nsynthetic.per_class = 40\n"
    "splits.members = 30\nsplits.reference = 10\nsplits.test = 30\n"
    "model.hidden = 12\n"
    "pretrain.epochs = 10\npretrain.batch_size = 16\npretrain.lr = 0.01\n"
    "finetune.epochs = 3\nfinetune.batch_size = 16\n"
    "pve.iterations = 2\npve.batch_size = 16\ntfo.iterations = 2\ntfo.batch_size = 16\n"
    "cwrf.rates = 0.05\nattack.n_shadow = 2\n"
    "sweep.sparsities = 0,0.5\nscenarios.portions = 0.05\n";

std::string lab_binary() {
  const char* env = std::getenv("CWRF_LAB");
  return env ? env : "";
}

int run_lab(const std::string& args) {
  const std::string cmd = lab_binary() + " " + args + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class LabCommands : public ::testing::Test {
 protected:
  void SetUp() override {
    if (lab_binary().empty()) GTEST_SKIP() << "CWRF_LAB not set";
    std::ofstream(dir_.path() / "tiny.cfg") << kTinyConfig;
  }
  std::string config() const { return (dir_.path() / "tiny.cfg").string(); }
  fs::path out(const std::string& name) const { return dir_.path() / name; }
  int lab(const std::string& cmd, const std::string& output, const std::string& extra = "") {
    return run_lab(cmd + " -c " + config() + " -o " + out(output).string() + " " + extra);
  }

  testing::TempDir dir_{"commands"};
};

TEST_F(LabCommands, FullPipelineWritesEveryArtifact) {
  ASSERT_EQ(lab("pretrain", "run"), 0);
  EXPECT_TRUE(fs::exists(out("run/checkpoints/seed1/vanilla.cwrf")));
  EXPECT_TRUE(fs::exists(out("run/checkpoints/seed1/unprotected.cwrf")));
  EXPECT_TRUE(fs::exists(out("run/manifests/seed1/splits.json")));
  EXPECT_TRUE(fs::exists(out("run/manifests/seed1/shadows.json")));
  EXPECT_TRUE(fs::exists(out("run/logs/seed1/pretrain.jsonl")));
  EXPECT_TRUE(fs::exists(out("run/config.cfg")));

  ASSERT_EQ(lab("score", "run"), 0);
  EXPECT_TRUE(fs::exists(out("run/scores/seed1/privacy.cwrf")));
  EXPECT_TRUE(fs::exists(out("run/scores/seed1/learnability.cwrf")));

  ASSERT_EQ(lab("correlate", "run"), 0);
  EXPECT_NE(slurp(out("run/tables/correlation.csv")).find("seed,group"), std::string::npos);

  ASSERT_EQ(lab("sweep-pruning", "run"), 0);
  EXPECT_TRUE(fs::exists(out("run/tables/sweep_pruning.csv")));
  EXPECT_TRUE(fs::exists(out("run/plots/sweep_accuracy.svg")));

  ASSERT_EQ(lab("cwrf", "run"), 0);
  EXPECT_TRUE(fs::exists(out("run/checkpoints/seed1/cwrf_r0.0500.cwrf")));
  EXPECT_TRUE(fs::exists(out("run/checkpoints/seed1/masks_r0.0500.cwrf")));
  const auto masks = defense::load_masks(out("run/checkpoints/seed1/masks_r0.0500.cwrf"));
  const auto cwrf = io::load_parameters(out("run/checkpoints/seed1/cwrf_r0.0500.cwrf"));
  const auto vn = io::load_parameters(out("run/checkpoints/seed1/vanilla.cwrf"));
  for (std::size_t i = 0; i < vn.size(); ++i) {
    if (masks.rewind[i]) {
      EXPECT_EQ(cwrf.values[i], vn.values[i]);
    }
  }

  ASSERT_EQ(lab("attack", "run"), 0);
  EXPECT_TRUE(fs::exists(out("run/tables/attack_seed1.json")));
  EXPECT_TRUE(fs::exists(out("run/tables/attack_seed1_lira.csv")));
  EXPECT_TRUE(fs::exists(out("run/plots/roc_attack_seed1.svg")));

  ASSERT_EQ(lab("defend", "run"), 0);
  std::istringstream lines(slurp(out("run/records.jsonl")));
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    const auto rec = record_from_json(nlohmann::json::parse(line));
    EXPECT_EQ(rec.seed, 1u);
    ++n;
  }
  EXPECT_EQ(n, 3u);

  ASSERT_EQ(lab("scenarios", "run"), 0);
  EXPECT_NE(slurp(out("run/tables/scenarios.csv")).find(",A3,"), std::string::npos);

  ASSERT_EQ(lab("report", "run"), 0);
  const auto report = nlohmann::json::parse(slurp(out("run/report.json")));
  EXPECT_EQ(report.at("records").get<std::size_t>(), 3u);
  EXPECT_EQ(report.at("rows").size(), 3u);
  EXPECT_TRUE(report.contains("selected_r"));
  EXPECT_TRUE(fs::exists(out("run/plots/privacy_utility_lira.svg")));
}

TEST_F(LabCommands, RerunReproducesCheckpointsAndRecords) {
  for (const char* name : {"a", "b"}) {
    ASSERT_EQ(lab("pretrain", name), 0);
    ASSERT_EQ(lab("cwrf", name), 0);
    ASSERT_EQ(lab("defend", name), 0);
  }
  for (const char* f : {"checkpoints/seed1/vanilla.cwrf", "checkpoints/seed1/unprotected.cwrf",
                        "checkpoints/seed1/cwrf_r0.0500.cwrf", "checkpoints/seed1/masks_r0.0500.cwrf",
                        "manifests/seed1/shadows.json", "tables/cwrf.csv"}) {
    EXPECT_EQ(slurp(out("a") / f), slurp(out("b") / f)) << f;
  }
  std::istringstream la(slurp(out("a/records.jsonl"))), lb(slurp(out("b/records.jsonl")));
  std::string x, y;
  while (std::getline(la, x)) {
    ASSERT_TRUE(std::getline(lb, y));
    EXPECT_TRUE(same_results(record_from_json(nlohmann::json::parse(x)),
                             record_from_json(nlohmann::json::parse(y))));
  }
}

TEST_F(LabCommands, OverridesAndErrors) {
  EXPECT_EQ(lab("pretrain", "bad", "-s bogus.key=1"), 2);
  EXPECT_EQ(lab("pretrain", "bad", "-s workers=0"), 2);
  EXPECT_EQ(lab("report", "empty"), 1);
  EXPECT_NE(run_lab("frobnicate"), 0);
  EXPECT_NE(run_lab("pretrain -c /nonexistent.cfg"), 0);
  ASSERT_EQ(lab("pretrain", "seeds", "-s seeds=4,5"), 0);
  EXPECT_TRUE(fs::exists(out("seeds/checkpoints/seed4/vanilla.cwrf")));
  EXPECT_TRUE(fs::exists(out("seeds/checkpoints/seed5/vanilla.cwrf")));
  EXPECT_FALSE(fs::exists(out("seeds/checkpoints/seed1")));
}

}  // namespace
}  // namespace cwrf::lab
