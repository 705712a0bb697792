// sctc/config.h
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

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sctc/data.h"
#include "sctc/model.h"
#include "sctc/train.h"

namespace sctc {

// "key = value" lines; '#' starts a comment. Duplicate keys and lines
// without '=' are rejected with the line number.
KeyValues parse_key_values(std::istream& is, const std::string& origin);
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(std::ostream& os, const KeyValues& kv);

struct ConfigKeyDoc {
  std::string key;
  std::string default_value;
  std::string help;
};

// Every key a training run config accepts, with its default.
const std::vector<ConfigKeyDoc>& run_config_keys();
// Every key a gen-data spec file accepts, with its default.
const std::vector<ConfigKeyDoc>& data_spec_keys();

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data_dir;

  // Rejects unknown keys. The vocabulary and feature dimension come from the
  // dataset; when given explicitly they must agree with it.
  static RunConfig from_key_values(const KeyValues& kv, const Vocabulary& vocab, std::size_t feat_dim);
  KeyValues to_key_values() const;
};

SyntheticTaskSpec parse_data_spec(const KeyValues& kv);

}  // namespace sctc
