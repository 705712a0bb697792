// src/config.cc
//
// Copyright 2026 The sctc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "sctc/config.h"

#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "sctc/error.h"

namespace sctc {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void reject_unknown(const KeyValues& kv, const std::vector<ConfigKeyDoc>& docs, const char* what) {
  std::set<std::string> known;
  for (const auto& d : docs) known.insert(d.key);
  for (const auto& [k, v] : kv) {
    if (!known.contains(k)) throw InvalidConfig(std::string("unknown ") + what + " key: " + k);
  }
}

}  // namespace

KeyValues parse_key_values(std::istream& is, const std::string& origin) {
  KeyValues kv;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidConfig(origin + ":" + std::to_string(n) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw InvalidConfig(origin + ":" + std::to_string(n) + ": empty key");
    if (!kv.emplace(key, value).second) {
      throw InvalidConfig(origin + ":" + std::to_string(n) + ": duplicate key " + key);
    }
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  return parse_key_values(is, path.string());
}

void write_key_values(std::ostream& os, const KeyValues& kv) {
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
}

const std::vector<ConfigKeyDoc>& run_config_keys() {
  static const std::vector<ConfigKeyDoc> keys = {
      {"data_dir", "", "dataset directory written by gen-data (required)"},
      {"model.layers", "18", "encoder layers L"},
      {"model.dim", "256", "model dimension D"},
      {"model.heads", "4", "attention heads H"},
      {"model.ff_dim", "4*dim", "feed-forward inner dimension"},
      {"model.inter_k", "5", "intermediate predictions K (interctc/selfcond)"},
      {"model.lambda", "0.5", "weight of the intermediate loss"},
      {"model.mode", "selfcond", "plain-ctc | interctc | selfcond"},
      {"model.activation", "relu", "relu | gelu"},
      {"model.seed", "1", "parameter initialisation seed"},
      {"model.vocab", "<dataset>", "token symbols; taken from the dataset"},
      {"model.feat_dim", "<dataset>", "input feature dimension; taken from the dataset"},
      {"train.epochs", "20", "training epochs"},
      {"train.batch_size", "8", "utterances per micro-batch"},
      {"train.accum", "2", "micro-batches per optimizer step"},
      {"train.lr_factor", "5", "learning-rate scale"},
      {"train.warmup", "1000", "warmup steps"},
      {"train.beta1", "0.9", "first-moment decay"},
      {"train.beta2", "0.98", "second-moment decay"},
      {"train.adam_eps", "1e-9", "optimizer epsilon"},
      {"train.clip_norm", "5", "gradient norm clip, 0 disables"},
      {"train.average_top", "10", "checkpoints averaged into the final model"},
      {"train.seed", "1", "batch order seed"},
  };
  return keys;
}

const std::vector<ConfigKeyDoc>& data_spec_keys() {
  static const std::vector<ConfigKeyDoc> keys = [] {
    const SyntheticTaskSpec d;
    std::vector<ConfigKeyDoc> out;
    const std::map<std::string, std::string> help = {
        {"data.vocab_size", "tokens |V|"},
        {"data.confusable_pairs", "token pairs with nearly identical acoustic prototypes"},
        {"data.train_count", "training utterances"},
        {"data.dev_count", "dev utterances"},
        {"data.test_count", "test utterances"},
        {"data.min_length", "shortest label sequence"},
        {"data.max_length", "longest label sequence"},
        {"data.min_frames", "fewest frames per token (>= 2)"},
        {"data.max_frames", "most frames per token"},
        {"data.feat_dim", "feature dimension"},
        {"data.sigma", "frame noise standard deviation"},
        {"data.pair_separation", "distance between paired prototypes, in units of sigma"},
        {"data.rule", "dependency rule: table | member"},
        {"data.seed", "generation seed"},
    };
    for (const auto& [k, v] : d.to_key_values()) out.push_back({k, v, help.at(k)});
    return out;
  }();
  return keys;
}

RunConfig RunConfig::from_key_values(const KeyValues& kv, const Vocabulary& vocab, std::size_t feat_dim) {
  reject_unknown(kv, run_config_keys(), "config");
  RunConfig rc;
  if (auto it = kv.find("data_dir"); it != kv.end()) rc.data_dir = it->second;
  rc.model = ModelConfig::from_key_values(kv);
  if (kv.contains("model.vocab") && !(rc.model.vocab == vocab)) {
    throw InvalidConfig("model.vocab does not match the dataset vocabulary");
  }
  if (kv.contains("model.feat_dim") && rc.model.feat_dim != feat_dim) {
    throw InvalidConfig("model.feat_dim does not match the dataset feature dimension");
  }
  rc.model.vocab = vocab;
  rc.model.feat_dim = feat_dim;
  if (!kv.contains("model.ff_dim")) rc.model.ff_dim = 4 * rc.model.dim;
  rc.train = TrainConfig::from_key_values(kv);
  rc.model.validate();
  rc.train.validate();
  return rc;
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv = model.to_key_values();
  for (const auto& [k, v] : train.to_key_values()) kv[k] = v;
  kv["data_dir"] = data_dir;
  return kv;
}

SyntheticTaskSpec parse_data_spec(const KeyValues& kv) {
  reject_unknown(kv, data_spec_keys(), "data spec");
  SyntheticTaskSpec spec = SyntheticTaskSpec::from_key_values(kv);
  spec.validate();
  return spec;
}

}  // namespace sctc
