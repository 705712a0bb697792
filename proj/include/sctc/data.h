// sctc/data.h
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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sctc/autograd.h"
#include "sctc/ctc.h"
#include "sctc/model.h"

namespace sctc {

// How the second half of every label sequence is derived. Positions below
// h = ceil(T/2) are free; position i >= h is next(t[i-1], t[i-h]).
//   table:   next is a seeded lookup table over (previous, back) pairs.
//   member:  the acoustic class is free; which member of a confusable pair
//            appears is fixed by (previous, back).
enum class DependencyRule { kTable, kMember };

std::string to_string(DependencyRule r);
DependencyRule parse_rule(const std::string& s);

struct SyntheticTaskSpec {
  std::size_t vocab_size = 12;
  std::size_t confusable_pairs = 4;
  std::size_t train_count = 2000;
  std::size_t dev_count = 200;
  std::size_t test_count = 200;
  std::size_t min_length = 6;
  std::size_t max_length = 14;
  std::size_t min_frames = 2;  // frames per token
  std::size_t max_frames = 3;
  std::size_t feat_dim = 16;
  double sigma = 0.5;
  double pair_separation = 1.0;  // distance between paired prototypes, in units of sigma
  DependencyRule rule = DependencyRule::kMember;
  std::uint64_t seed = 1;

  void validate() const;
  KeyValues to_key_values() const;  // keys prefixed "data."
  static SyntheticTaskSpec from_key_values(const KeyValues& kv);
};

struct Utterance {
  std::string id;
  Tensor features;  // [S, D_feat]
  LabelSequence labels;
};

struct Dataset {
  Vocabulary vocab;
  std::vector<Utterance> train, dev, test;

  const std::vector<Utterance>& split(const std::string& name) const;
};

// Token symbols: a..z for small vocabularies, t00.. otherwise. Tokens 1..2P
// form the confusable pairs (1,2), (3,4), ...
Vocabulary synthetic_vocabulary(std::size_t size);

// The deterministic grammar shared by every utterance of one spec.
class Grammar {
 public:
  explicit Grammar(const SyntheticTaskSpec& spec);

  // Tokens the free prefix may use: unpaired tokens when pairs exist.
  const std::vector<int>& free_tokens() const { return free_; }
  std::size_t acoustic_class(int token) const;
  std::size_t class_count() const { return classes_; }
  int partner(int token) const;  // same token when unpaired

  // Full next-token function for the table rule.
  int next(int previous, int back) const;
  // Member choice for the member rule: picks within the class of `token`.
  int choose_member(int token, int previous, int back) const;

  bool satisfies(const LabelSequence& y) const;
  DependencyRule rule() const { return rule_; }

 private:
  std::size_t vocab_;
  std::size_t pairs_;
  std::size_t classes_;
  DependencyRule rule_;
  std::vector<int> free_;
  std::vector<int> table_;     // [prev][back] -> next
  std::vector<int> member_;    // [prev][back] -> 0/1
};

// Mean frame vector of every token, indexed by token id (entry 0 unused). The
// second token of a pair sits sigma * pair_separation away from the first.
std::vector<std::vector<double>> token_prototypes(const SyntheticTaskSpec& spec);

Dataset generate_synthetic(const SyntheticTaskSpec& spec);

// Feature files: "FEAT", u32 version, u32 S, u32 D, S*D little-endian f32.
void write_features(const std::filesystem::path& path, const Tensor& features);
Tensor read_features(const std::filesystem::path& path);

struct ManifestEntry {
  std::string id;
  std::vector<std::string> tokens;
  std::string feature_path;  // relative to the manifest's directory

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

// One record per line: id \t space-separated tokens \t relative path.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);
// Throws FormatError naming the line on malformed records and IoError naming
// the path when a referenced feature file is missing.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

// Dataset directory: vocab.txt, spec.txt, <split>.tsv, feats/<split>/<id>.feat
void save_dataset(const std::filesystem::path& dir, const Dataset& data, const SyntheticTaskSpec& spec);
Vocabulary read_vocabulary(const std::filesystem::path& dir);
std::vector<Utterance> load_split(const std::filesystem::path& dir, const std::string& split,
                                  const Vocabulary& vocab);

struct Batch {
  std::vector<std::string> ids;
  Tensor features;  // [B * P, D_feat], padded rows are zero
  PadMask mask;
  std::vector<LabelSequence> labels;
};

Batch make_batch(const std::vector<const Utterance*>& utts);
// Length-bucketed batches; utterance and batch order depend only on seed.
std::vector<Batch> make_batches(const std::vector<Utterance>& utts, std::size_t batch_size,
                                std::uint64_t seed);

}  // namespace sctc
