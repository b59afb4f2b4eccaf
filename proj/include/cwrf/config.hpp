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

// Experiment configuration: a flat `key = value` file, one entry per line,
// `#` starts a comment. Lists are comma separated. Every key has a default;
// unknown keys are rejected so typos do not silently fall back.

#ifndef CWRF_CONFIG_HPP_
#define CWRF_CONFIG_HPP_

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cwrf/attacks.hpp"
#include "cwrf/dataset.hpp"
#include "cwrf/error.hpp"
#include "cwrf/model.hpp"
#include "cwrf/scoring.hpp"
#include "cwrf/trainers.hpp"
#include "cwrf/training.hpp"

namespace cwrf::lab {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ordered key/value store with typed accessors.
class KeyValues {
 public:
  static KeyValues parse(std::istream& in, const std::string& origin = "<config>") {
    KeyValues kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      }
      kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return kv;
  }

  static KeyValues load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    return parse(in, path.string());
  }

  // "key=value" as given on the command line.
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override must be key=value: " + assignment);
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
  }

  void set(const std::string& key, const std::string& value) {
    if (key.empty()) throw ConfigError("empty config key");
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string dump() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
    return out.str();
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

 private:
  std::map<std::string, std::string> values_;
};

enum class DefenseFamily { none, trainer, trainer_cwrf };

inline std::string to_string(DefenseFamily f) {
  switch (f) {
    case DefenseFamily::none: return "none";
    case DefenseFamily::trainer: return "trainer";
    case DefenseFamily::trainer_cwrf: return "cwrf";
  }
  return "?";
}

inline DefenseFamily defense_family_from_string(const std::string& s) {
  for (auto f : {DefenseFamily::none, DefenseFamily::trainer, DefenseFamily::trainer_cwrf}) {
    if (to_string(f) == s) return f;
  }
  throw ConfigError("unknown defense family: " + s);
}

enum class ShadowReference { reuse, resample };

struct ExperimentConfig {
  std::filesystem::path output_dir = "runs/default";
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t workers = 1;

  std::string dataset = "synthetic";  // synthetic | csv
  std::filesystem::path csv_path;
  data::SyntheticSpec synthetic;

  std::size_t n_members = 180;
  std::size_t n_reference = 20;
  std::size_t n_test = 180;

  std::vector<std::size_t> hidden{64, 64};
  bool norm = true;

  defense::TrainConfig pretrain;  // plain CE from the vanilla initialization
  scoring::PveConfig pve;
  std::size_t tfo_iterations = 30;
  double tfo_lr = 1e-3;
  std::size_t tfo_batch_size = 256;

  defense::TrainConfig finetune;     // schedule of every fine-tuning phase
  defense::TrainerConfig privacy_trainer = defense::RelaxLoss{};

  std::vector<DefenseFamily> defenses{DefenseFamily::none, DefenseFamily::trainer,
                                      DefenseFamily::trainer_cwrf};
  std::vector<double> rates{0.01, 0.02, 0.03, 0.05, 0.07, 0.1};
  double max_accuracy_drop = 0.03;  // r selection rule of the grid search

  std::vector<double> sparsities{0.0, 0.5, 0.7, 0.8, 0.9, 0.95};
  defense::TrainConfig sweep_finetune;  // survivors of the pruning sweep; finetune.* unless overridden
  std::vector<double> portions{0.001, 0.01, 0.03, 0.05};
  double prune_sparsity = 0.85;

  std::size_t n_shadow = 8;
  mia::AttackConfig attack;
  ShadowReference shadow_reference = ShadowReference::reuse;

  ExperimentConfig() {
    finetune.epochs = 40;
    sweep_finetune = finetune;
  }

  nn::ModelSpec model_spec(std::size_t input_dim, std::size_t classes, std::uint64_t seed) const {
    nn::ModelSpec spec;
    spec.input_dim = input_dim;
    spec.output_dim = classes;
    spec.hidden = hidden;
    spec.norm = norm;
    spec.seed = seed;
    return spec;
  }

  void validate() const {
    require(!seeds.empty(), "config: seeds must be nonempty");
    std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
    require(distinct.size() == seeds.size(), "config: seeds must be distinct");
    for (double r : rates) require(r > 0.0 && r < 1.0, "config: rewind rates must lie in (0, 1)");
    for (double r : portions) require(r > 0.0 && r < 1.0, "config: portions must lie in (0, 1)");
    for (double s : sparsities) require(s >= 0.0 && s < 1.0, "config: sparsities in [0, 1)");
    require(n_shadow >= 2 && n_shadow % 2 == 0, "config: attack.n_shadow must be even and >= 2");
    require(workers >= 1, "config: workers must be >= 1");
    require(dataset == "synthetic" || dataset == "csv", "config: dataset must be synthetic|csv");
    pve.validate();
  }
};

namespace detail {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("config key " + key + ": cannot parse '" + text + "'");
  }
  return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("config key " + key + ": expected true|false, got '" + text + "'");
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  for (const auto& item : KeyValues::split_list(text)) out.push_back(parse_number<T>(key, item));
  return out;
}

inline void apply_train_key(defense::TrainConfig& t, const std::string& field,
                            const std::string& key, const std::string& v) {
  if (field == "epochs") t.epochs = parse_number<std::size_t>(key, v);
  else if (field == "batch_size") t.batch_size = parse_number<std::size_t>(key, v);
  else if (field == "lr") t.lr = parse_number<double>(key, v);
  else if (field == "beta1") t.beta1 = parse_number<double>(key, v);
  else if (field == "beta2") t.beta2 = parse_number<double>(key, v);
  else if (field == "weight_decay") t.weight_decay = parse_number<double>(key, v);
  else if (field == "log_every_epoch") t.log_every_epoch = parse_bool(key, v);
  else throw ConfigError("unknown config key: " + key);
}

}  // namespace detail

inline ExperimentConfig to_experiment_config(const KeyValues& kv) {
  using detail::parse_bool;
  using detail::parse_list;
  using detail::parse_number;
  ExperimentConfig c;
  std::string trainer = "relaxloss";
  double relax_alpha = defense::RelaxLoss{}.alpha;
  double dp_clip = defense::DpSgd{}.clip;
  double dp_noise = defense::DpSgd{}.noise;
  std::vector<std::pair<std::string, std::string>> sweep_keys;
  for (const auto& [key, v] : kv.entries()) {
    const auto dot = key.find('.');
    const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string field = dot == std::string::npos ? key : key.substr(dot + 1);
    if (key == "output_dir") c.output_dir = v;
    else if (key == "seeds") c.seeds = parse_list<std::uint64_t>(key, v);
    else if (key == "workers") c.workers = parse_number<std::size_t>(key, v);
    else if (key == "dataset") c.dataset = v;
    else if (key == "dataset.csv") c.csv_path = v;
    else if (key == "synthetic.classes") c.synthetic.classes = parse_number<std::size_t>(key, v);
    else if (key == "synthetic.dim") c.synthetic.dim = parse_number<std::size_t>(key, v);
    else if (key == "synthetic.per_class") c.synthetic.per_class = parse_number<std::size_t>(key, v);
    else if (key == "synthetic.cluster_std") c.synthetic.cluster_std = parse_number<double>(key, v);
    else if (key == "synthetic.separation") c.synthetic.separation = parse_number<double>(key, v);
    else if (key == "splits.members") c.n_members = parse_number<std::size_t>(key, v);
    else if (key == "splits.reference") c.n_reference = parse_number<std::size_t>(key, v);
    else if (key == "splits.test") c.n_test = parse_number<std::size_t>(key, v);
    else if (key == "model.hidden") c.hidden = parse_list<std::size_t>(key, v);
    else if (key == "model.norm") c.norm = parse_bool(key, v);
    else if (section == "pretrain") detail::apply_train_key(c.pretrain, field, key, v);
    else if (section == "finetune") detail::apply_train_key(c.finetune, field, key, v);
    else if (key == "pve.lambda") c.pve.lambda = parse_number<double>(key, v);
    else if (key == "pve.iterations") c.pve.iterations = parse_number<std::size_t>(key, v);
    else if (key == "pve.lr") c.pve.lr = parse_number<double>(key, v);
    else if (key == "pve.batch_size") c.pve.batch_size = parse_number<std::size_t>(key, v);
    else if (key == "tfo.iterations") c.tfo_iterations = parse_number<std::size_t>(key, v);
    else if (key == "tfo.lr") c.tfo_lr = parse_number<double>(key, v);
    else if (key == "tfo.batch_size") c.tfo_batch_size = parse_number<std::size_t>(key, v);
    else if (key == "trainer") trainer = v;
    else if (key == "relaxloss.alpha") relax_alpha = parse_number<double>(key, v);
    else if (key == "dpsgd.clip") dp_clip = parse_number<double>(key, v);
    else if (key == "dpsgd.noise") dp_noise = parse_number<double>(key, v);
    else if (key == "defenses") {
      c.defenses.clear();
      for (const auto& d : KeyValues::split_list(v)) c.defenses.push_back(defense_family_from_string(d));
    }
    else if (key == "cwrf.rates") c.rates = parse_list<double>(key, v);
    else if (key == "cwrf.max_accuracy_drop") c.max_accuracy_drop = parse_number<double>(key, v);
    else if (key == "sweep.sparsities") c.sparsities = parse_list<double>(key, v);
    else if (key.starts_with("sweep.finetune.")) sweep_keys.emplace_back(key, v);
    else if (key == "scenarios.portions") c.portions = parse_list<double>(key, v);
    else if (key == "scenarios.prune_sparsity") c.prune_sparsity = parse_number<double>(key, v);
    else if (key == "attack.n_shadow") c.n_shadow = parse_number<std::size_t>(key, v);
    else if (key == "attack.kinds") {
      c.attack.kinds.clear();
      for (const auto& k : KeyValues::split_list(v)) {
        try {
          c.attack.kinds.push_back(mia::attack_from_string(k));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(e.what());
        }
      }
    }
    else if (key == "attack.fpr_grid") c.attack.fpr_grid = parse_list<double>(key, v);
    else if (key == "attack.rmia_gamma") c.attack.rmia_gamma = parse_number<double>(key, v);
    else if (key == "attack.lira_offline") c.attack.lira_offline = parse_bool(key, v);
    else if (key == "attack.shadow_reference") {
      if (v == "reuse") c.shadow_reference = ShadowReference::reuse;
      else if (v == "resample") c.shadow_reference = ShadowReference::resample;
      else throw ConfigError("attack.shadow_reference must be reuse|resample");
    }
    else throw ConfigError("unknown config key: " + key);
  }
  c.sweep_finetune = c.finetune;
  for (const auto& [key, v] : sweep_keys) {
    detail::apply_train_key(c.sweep_finetune, key.substr(std::string("sweep.finetune.").size()), key, v);
  }
  if (trainer == "plain_ce") c.privacy_trainer = defense::PlainCe{};
  else if (trainer == "relaxloss") c.privacy_trainer = defense::RelaxLoss{relax_alpha};
  else if (trainer == "dpsgd") c.privacy_trainer = defense::DpSgd{dp_clip, dp_noise};
  else throw ConfigError("trainer must be plain_ce|relaxloss|dpsgd, got " + trainer);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

}  // namespace cwrf::lab

#endif  // CWRF_CONFIG_HPP_
