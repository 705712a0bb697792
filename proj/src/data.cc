// src/data.cc
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

#include "sctc/data.h"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "sctc/error.h"

namespace sctc {
namespace {

constexpr char kFeatMagic[4] = {'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFeatVersion = 1;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

template <typename T>
T parse_key(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw InvalidConfig("bad value for " + key + ": '" + text + "'");
  return value;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t read_u32(std::istream& is, const std::filesystem::path& path) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4)) throw FormatError(path.string() + ": truncated header");
  return v;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

std::string to_string(DependencyRule r) { return r == DependencyRule::kMember ? "member" : "table"; }

DependencyRule parse_rule(const std::string& s) {
  if (s == "table") return DependencyRule::kTable;
  if (s == "member") return DependencyRule::kMember;
  throw InvalidConfig("unknown dependency rule '" + s + "' (expected table or member)");
}

void SyntheticTaskSpec::validate() const {
  if (vocab_size < 2) throw InvalidConfig("data.vocab_size must be at least 2");
  if (2 * confusable_pairs > vocab_size) throw InvalidConfig("data.confusable_pairs exceeds vocab_size / 2");
  if (confusable_pairs > 0 && vocab_size - 2 * confusable_pairs < 2) {
    throw InvalidConfig("need at least two unpaired tokens when confusable pairs exist");
  }
  if (min_length < 1 || max_length < min_length) throw InvalidConfig("need 1 <= data.min_length <= data.max_length");
  if (min_frames < 2 || max_frames < min_frames) throw InvalidConfig("need 2 <= data.min_frames <= data.max_frames");
  if (feat_dim == 0) throw InvalidConfig("data.feat_dim must be positive");
  if (!(sigma >= 0.0)) throw InvalidConfig("data.sigma must be non-negative");
  if (!(pair_separation >= 0.0)) throw InvalidConfig("data.pair_separation must be non-negative");
}

KeyValues SyntheticTaskSpec::to_key_values() const {
  return {{"data.vocab_size", std::to_string(vocab_size)},
          {"data.confusable_pairs", std::to_string(confusable_pairs)},
          {"data.train_count", std::to_string(train_count)},
          {"data.dev_count", std::to_string(dev_count)},
          {"data.test_count", std::to_string(test_count)},
          {"data.min_length", std::to_string(min_length)},
          {"data.max_length", std::to_string(max_length)},
          {"data.min_frames", std::to_string(min_frames)},
          {"data.max_frames", std::to_string(max_frames)},
          {"data.feat_dim", std::to_string(feat_dim)},
          {"data.sigma", format_double(sigma)},
          {"data.pair_separation", format_double(pair_separation)},
          {"data.rule", to_string(rule)},
          {"data.seed", std::to_string(seed)}};
}

SyntheticTaskSpec SyntheticTaskSpec::from_key_values(const KeyValues& kv) {
  SyntheticTaskSpec s;
  for (const auto& [key, value] : kv) {
    if (key == "data.vocab_size") s.vocab_size = parse_key<std::size_t>(key, value);
    else if (key == "data.confusable_pairs") s.confusable_pairs = parse_key<std::size_t>(key, value);
    else if (key == "data.train_count") s.train_count = parse_key<std::size_t>(key, value);
    else if (key == "data.dev_count") s.dev_count = parse_key<std::size_t>(key, value);
    else if (key == "data.test_count") s.test_count = parse_key<std::size_t>(key, value);
    else if (key == "data.min_length") s.min_length = parse_key<std::size_t>(key, value);
    else if (key == "data.max_length") s.max_length = parse_key<std::size_t>(key, value);
    else if (key == "data.min_frames") s.min_frames = parse_key<std::size_t>(key, value);
    else if (key == "data.max_frames") s.max_frames = parse_key<std::size_t>(key, value);
    else if (key == "data.feat_dim") s.feat_dim = parse_key<std::size_t>(key, value);
    else if (key == "data.sigma") s.sigma = parse_key<double>(key, value);
    else if (key == "data.pair_separation") s.pair_separation = parse_key<double>(key, value);
    else if (key == "data.rule") s.rule = parse_rule(value);
    else if (key == "data.seed") s.seed = parse_key<std::uint64_t>(key, value);
    else throw InvalidConfig("unknown config key: " + key);
  }
  return s;
}

const std::vector<Utterance>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "test") return test;
  throw InvalidConfig("unknown split '" + name + "' (expected train, dev or test)");
}

Vocabulary synthetic_vocabulary(std::size_t size) {
  std::vector<std::string> tokens;
  for (std::size_t i = 0; i < size; ++i) {
    if (size <= 26) {
      tokens.emplace_back(1, static_cast<char>('a' + i));
    } else {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "t%02zu", i);
      tokens.emplace_back(buf);
    }
  }
  return Vocabulary(std::move(tokens));
}

Grammar::Grammar(const SyntheticTaskSpec& spec)
    : vocab_(spec.vocab_size),
      pairs_(spec.confusable_pairs),
      classes_(spec.vocab_size - spec.confusable_pairs),
      rule_(spec.rule) {
  spec.validate();
  const int first_free = pairs_ > 0 ? static_cast<int>(2 * pairs_) + 1 : 1;
  for (int t = first_free; t <= static_cast<int>(vocab_); ++t) free_.push_back(t);

  std::mt19937_64 rng(mix_seed(spec.seed, 0x6772616d));  // "gram"
  table_.assign((vocab_ + 1) * (vocab_ + 1), 0);
  member_.assign((vocab_ + 1) * (vocab_ + 1), 0);
  for (std::size_t prev = 1; prev <= vocab_; ++prev) {
    for (std::size_t back = 1; back <= vocab_; ++back) {
      // never repeat the previous token
      std::size_t next = uniform_index(rng, 1, vocab_ - 1);
      if (next >= prev) ++next;
      table_[prev * (vocab_ + 1) + back] = static_cast<int>(next);
    }
  }
  // Member rule: every token carries one bit (its position within its pair,
  // or a seeded coin for unpaired tokens) and the member chosen at i is
  // bit(y[i-1]) xor bit(y[i-h]). A run of paired tokens can then only be
  // resolved left to right.
  std::vector<int> bit(vocab_ + 1, 0);
  for (std::size_t t = 1; t <= vocab_; ++t) {
    bit[t] = t <= 2 * pairs_ ? static_cast<int>((t - 1) % 2) : static_cast<int>(uniform_index(rng, 0, 1));
  }
  for (std::size_t prev = 1; prev <= vocab_; ++prev) {
    for (std::size_t back = 1; back <= vocab_; ++back) member_[prev * (vocab_ + 1) + back] = bit[prev] ^ bit[back];
  }
}

std::size_t Grammar::acoustic_class(int token) const {
  const auto t = static_cast<std::size_t>(token);
  if (t <= 2 * pairs_) return (t - 1) / 2;
  return pairs_ + (t - 2 * pairs_ - 1);
}

int Grammar::partner(int token) const {
  const auto t = static_cast<std::size_t>(token);
  if (t > 2 * pairs_) return token;
  return t % 2 == 1 ? token + 1 : token - 1;
}

int Grammar::next(int previous, int back) const {
  return table_[static_cast<std::size_t>(previous) * (vocab_ + 1) + static_cast<std::size_t>(back)];
}

int Grammar::choose_member(int token, int previous, int back) const {
  const auto t = static_cast<std::size_t>(token);
  if (t > 2 * pairs_) return token;
  const int bit = member_[static_cast<std::size_t>(previous) * (vocab_ + 1) + static_cast<std::size_t>(back)];
  const int first = static_cast<int>(2 * ((t - 1) / 2) + 1);
  return first + bit;
}

bool Grammar::satisfies(const LabelSequence& y) const {
  const std::size_t T = y.size();
  const std::size_t h = (T + 1) / 2;
  for (std::size_t i = 0; i < T; ++i) {
    if (y[i] < 1 || static_cast<std::size_t>(y[i]) > vocab_) return false;
    if (i > 0 && y[i] == y[i - 1]) return false;
    if (i < h) {
      if (std::find(free_.begin(), free_.end(), y[i]) == free_.end()) return false;
      continue;
    }
    if (rule_ == DependencyRule::kTable) {
      if (y[i] != next(y[i - 1], y[i - h])) return false;
    } else {
      if (acoustic_class(y[i]) == acoustic_class(y[i - 1])) return false;
      if (y[i] != choose_member(y[i], y[i - 1], y[i - h])) return false;
    }
  }
  return true;
}

std::vector<std::vector<double>> token_prototypes(const SyntheticTaskSpec& spec) {
  spec.validate();
  const Grammar grammar(spec);
  std::mt19937_64 rng(mix_seed(spec.seed, 0x70726f74));  // "prot"
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> by_class(grammar.class_count(), std::vector<double>(spec.feat_dim));
  for (auto& p : by_class) {
    for (double& v : p) v = normal(rng);
  }
  std::vector<std::vector<double>> out(spec.vocab_size + 1);
  for (std::size_t t = 1; t <= spec.vocab_size; ++t) out[t] = by_class[grammar.acoustic_class(static_cast<int>(t))];
  for (std::size_t c = 0; c < spec.confusable_pairs; ++c) {
    std::vector<double> dir(spec.feat_dim);
    double norm = 0.0;
    for (double& v : dir) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    auto& second = out[2 * c + 2];
    for (std::size_t d = 0; d < spec.feat_dim; ++d) second[d] += spec.sigma * spec.pair_separation * dir[d] / norm;
  }
  return out;
}

Dataset generate_synthetic(const SyntheticTaskSpec& spec) {
  spec.validate();
  const Grammar grammar(spec);
  Dataset data;
  data.vocab = synthetic_vocabulary(spec.vocab_size);

  const auto prototypes = token_prototypes(spec);

  const std::size_t n_classes = grammar.class_count();
  auto make_split = [&](const std::string& name, std::size_t split_index, std::size_t count) {
    std::vector<Utterance> out;
    out.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
      std::mt19937_64 rng(mix_seed(mix_seed(spec.seed, split_index + 1), n));
      std::normal_distribution<double> normal(0.0, 1.0);
      const std::size_t T = uniform_index(rng, spec.min_length, spec.max_length);
      const std::size_t h = (T + 1) / 2;
      LabelSequence y;
      const auto& free = grammar.free_tokens();
      for (std::size_t i = 0; i < T; ++i) {
        int tok;
        if (i < h) {
          do {
            tok = free[uniform_index(rng, 0, free.size() - 1)];
          } while (i > 0 && tok == y[i - 1]);
        } else if (spec.rule == DependencyRule::kTable) {
          tok = grammar.next(y[i - 1], y[i - h]);
        } else {
          std::size_t cls;
          do {
            cls = uniform_index(rng, 0, n_classes - 1);
          } while (cls == grammar.acoustic_class(y[i - 1]));
          // representative token of the class, then the rule picks the member
          tok = cls < spec.confusable_pairs ? static_cast<int>(2 * cls + 1)
                                            : static_cast<int>(cls + spec.confusable_pairs + 1);
          tok = grammar.choose_member(tok, y[i - 1], y[i - h]);
        }
        y.push_back(tok);
      }
      std::vector<std::size_t> frames(T);
      std::size_t S = 0;
      for (auto& f : frames) S += (f = uniform_index(rng, spec.min_frames, spec.max_frames));
      Tensor feats({S, spec.feat_dim});
      std::size_t row = 0;
      for (std::size_t i = 0; i < T; ++i) {
        const auto& proto = prototypes[static_cast<std::size_t>(y[i])];
        for (std::size_t f = 0; f < frames[i]; ++f, ++row) {
          auto r = feats.row(row);
          for (std::size_t d = 0; d < spec.feat_dim; ++d) r[d] = proto[d] + spec.sigma * normal(rng);
        }
      }
      char id[64];
      std::snprintf(id, sizeof(id), "%s-%05zu", name.c_str(), n);
      out.push_back({id, std::move(feats), std::move(y)});
    }
    return out;
  };
  data.train = make_split("train", 0, spec.train_count);
  data.dev = make_split("dev", 1, spec.dev_count);
  data.test = make_split("test", 2, spec.test_count);
  return data;
}

void write_features(const std::filesystem::path& path, const Tensor& features) {
  if (features.rank() != 2) throw InvalidShape("features must be [S, D]");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(kFeatMagic, 4);
  write_u32(os, kFeatVersion);
  write_u32(os, static_cast<std::uint32_t>(features.rows()));
  write_u32(os, static_cast<std::uint32_t>(features.cols()));
  std::vector<float> buf(features.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(features[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw IoError("failed writing " + path.string());
}

Tensor read_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open feature file " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kFeatMagic, 4) != 0) {
    throw FormatError(path.string() + ": not a FEAT file");
  }
  const std::uint32_t version = read_u32(is, path);
  if (version != kFeatVersion) throw FormatError(path.string() + ": unsupported FEAT version " + std::to_string(version));
  const std::uint32_t S = read_u32(is, path), D = read_u32(is, path);
  if (S == 0 || D == 0) throw FormatError(path.string() + ": empty feature matrix");
  std::vector<float> buf(static_cast<std::size_t>(S) * D);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
    throw FormatError(path.string() + ": truncated feature data");
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError(path.string() + ": trailing bytes");
  std::vector<double> values(buf.begin(), buf.end());
  return Tensor({S, D}, std::move(values));
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  for (const auto& e : entries) {
    os << e.id << '\t';
    for (std::size_t i = 0; i < e.tokens.size(); ++i) os << (i ? " " : "") << e.tokens[i];
    os << '\t' << e.feature_path << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != 3 || fields[0].empty() || fields[2].empty()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) +
                        ": expected <id>\\t<tokens>\\t<feature path>");
    }
    ManifestEntry e{fields[0], {}, fields[2]};
    std::istringstream toks(fields[1]);
    for (std::string t; toks >> t;) e.tokens.push_back(t);
    const auto feat = path.parent_path() / e.feature_path;
    if (!std::filesystem::exists(feat)) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": missing feature file " + feat.string());
    }
    out.push_back(std::move(e));
  }
  return out;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& data, const SyntheticTaskSpec& spec) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "vocab.txt", std::ios::binary);
    for (const auto& t : data.vocab.tokens()) os << t << '\n';
    if (!os) throw IoError("cannot write " + (dir / "vocab.txt").string());
  }
  {
    std::ofstream os(dir / "spec.txt", std::ios::binary);
    for (const auto& [k, v] : spec.to_key_values()) os << k << '=' << v << '\n';
    if (!os) throw IoError("cannot write " + (dir / "spec.txt").string());
  }
  for (const char* name : {"train", "dev", "test"}) {
    const auto& utts = data.split(name);
    const auto feat_dir = dir / "feats" / name;
    std::filesystem::create_directories(feat_dir);
    std::vector<ManifestEntry> entries;
    for (const auto& u : utts) {
      const std::string rel = std::string("feats/") + name + "/" + u.id + ".feat";
      write_features(dir / rel, u.features);
      ManifestEntry e{u.id, {}, rel};
      for (int id : u.labels) e.tokens.push_back(data.vocab.symbol(id));
      entries.push_back(std::move(e));
    }
    write_manifest(dir / (std::string(name) + ".tsv"), entries);
  }
}

Vocabulary read_vocabulary(const std::filesystem::path& dir) {
  std::ifstream is(dir / "vocab.txt");
  if (!is) throw IoError("cannot open " + (dir / "vocab.txt").string());
  std::vector<std::string> tokens;
  for (std::string line; std::getline(is, line);) {
    if (!line.empty()) tokens.push_back(line);
  }
  return Vocabulary(std::move(tokens));
}

std::vector<Utterance> load_split(const std::filesystem::path& dir, const std::string& split,
                                  const Vocabulary& vocab) {
  const auto manifest = dir / (split + ".tsv");
  std::vector<Utterance> out;
  for (const auto& e : read_manifest(manifest)) {
    Utterance u;
    u.id = e.id;
    u.features = read_features(dir / e.feature_path);
    for (const auto& t : e.tokens) u.labels.push_back(vocab.id(t));
    out.push_back(std::move(u));
  }
  return out;
}

Batch make_batch(const std::vector<const Utterance*>& utts) {
  if (utts.empty()) throw ContractError("make_batch: no utterances");
  Batch b;
  const std::size_t D = utts.front()->features.cols();
  for (const auto* u : utts) {
    if (u->features.cols() != D) throw InvalidShape("make_batch: feature dims differ");
    b.mask.padded_length = std::max(b.mask.padded_length, u->features.rows());
  }
  b.features = Tensor({b.mask.padded_length * utts.size(), D});
  for (std::size_t i = 0; i < utts.size(); ++i) {
    const auto* u = utts[i];
    std::copy(u->features.values().begin(), u->features.values().end(),
              b.features.values().begin() + static_cast<std::ptrdiff_t>(i * b.mask.padded_length * D));
    b.ids.push_back(u->id);
    b.mask.lengths.push_back(u->features.rows());
    b.labels.push_back(u->labels);
  }
  return b;
}

std::vector<Batch> make_batches(const std::vector<Utterance>& utts, std::size_t batch_size,
                                std::uint64_t seed) {
  if (batch_size == 0) throw InvalidConfig("batch size must be at least 1");
  std::vector<const Utterance*> order;
  for (const auto& u : utts) order.push_back(&u);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(), [](const Utterance* a, const Utterance* b) {
    return a->features.rows() < b->features.rows();
  });
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    std::vector<const Utterance*> chunk(order.begin() + static_cast<std::ptrdiff_t>(i),
                                        order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
    batches.push_back(make_batch(chunk));
  }
  std::shuffle(batches.begin(), batches.end(), rng);
  return batches;
}

}  // namespace sctc
