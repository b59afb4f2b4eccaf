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

// cwrf_lab: experiment runner.
//
//   cwrf_lab pretrain --config configs/desk.cfg
//   cwrf_lab defend --config configs/desk.cfg --set workers=4
//   cwrf_lab report --config configs/desk.cfg

#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cwrf/commands.hpp"

namespace {

using Command = std::function<int(const cwrf::lab::ExperimentConfig&, const cwrf::lab::Workspace&)>;

struct Options {
  std::string config;
  std::vector<std::string> overrides;
  std::string output;
};

int run(const Options& opt, const Command& command) {
  auto kv = opt.config.empty() ? cwrf::lab::KeyValues{} : cwrf::lab::KeyValues::load(opt.config);
  for (const auto& o : opt.overrides) kv.apply_override(o);
  if (!opt.output.empty()) kv.set("output_dir", opt.output);
  const auto cfg = cwrf::lab::to_experiment_config(kv);
  const cwrf::lab::Workspace ws(cfg, kv);
  return command(cfg, ws);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Critical-weight rewinding and fine-tuning experiments"};
  app.require_subcommand(1);

  const std::vector<std::tuple<std::string, std::string, Command>> commands{
      {"pretrain", "Train θ_up from θ_vn for every seed and save both", cwrf::lab::cmd_pretrain},
      {"sweep-pruning", "One-shot learnability pruning + fine-tuning across sparsities",
       cwrf::lab::cmd_sweep_pruning},
      {"correlate", "Correlate learnability and privacy-vulnerability scores",
       cwrf::lab::cmd_correlate},
      {"score", "Compute and save learnability and privacy scores", cwrf::lab::cmd_score},
      {"cwrf", "Run rewinding + masked fine-tuning for every rate", cwrf::lab::cmd_cwrf},
      {"defend", "Attack {none, trainer, trainer+CWRF} x rates x seeds", cwrf::lab::cmd_defend},
      {"scenarios", "M1-M3 pruning and A1-A3 remove/rewind scenarios", cwrf::lab::cmd_scenarios},
      {"attack", "Attack the undefended target of every seed", cwrf::lab::cmd_attack},
      {"report", "Summarize records.jsonl into report.json and plots", cwrf::lab::cmd_report},
  };

  std::map<std::string, Options> options;
  std::map<CLI::App*, const Command*> dispatch;
  for (const auto& [name, help, command] : commands) {
    auto* sub = app.add_subcommand(name, help);
    auto& opt = options[name];
    sub->add_option("-c,--config", opt.config, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", opt.overrides, "override a config key (key=value)");
    sub->add_option("-o,--output", opt.output, "output directory (overrides output_dir)");
    dispatch[sub] = &command;
  }

  CLI11_PARSE(app, argc, argv);

  for (const auto& [sub, command] : dispatch) {
    if (!sub->parsed()) continue;
    try {
      return run(options[sub->get_name()], *command);
    } catch (const cwrf::lab::ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return 1;
    }
  }
  return 1;
}
