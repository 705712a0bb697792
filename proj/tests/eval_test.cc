// tests/eval_test.cc
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

#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <random>
#include <sstream>
#include <vector>

#include "sctc/error.h"
#include "sctc/eval.h"
#include "json.hpp"

namespace sctc {
namespace {

// Independent oracle for the total edit cost: plain recursion with memo.
std::size_t levenshtein(const LabelSequence& a, const LabelSequence& b) {
  std::vector<std::vector<long>> memo(a.size() + 1, std::vector<long>(b.size() + 1, -1));
  std::function<long(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> long {
    if (i == a.size()) return static_cast<long>(b.size() - j);
    if (j == b.size()) return static_cast<long>(a.size() - i);
    long& m = memo[i][j];
    if (m >= 0) return m;
    m = std::min({go(i + 1, j + 1) + (a[i] != b[j]), go(i + 1, j) + 1, go(i, j + 1) + 1});
    return m;
  };
  return static_cast<std::size_t>(go(0, 0));
}

LabelSequence random_seq(std::mt19937_64& rng, std::size_t max_len) {
  LabelSequence s(rng() % (max_len + 1));
  for (int& v : s) v = 1 + static_cast<int>(rng() % 4);
  return s;
}

TEST(EditDistanceTest, Examples) {
  EXPECT_EQ(edit_distance({1, 2, 3}, {1, 2, 3}), (ErrorCounts{0, 0, 0, 3}));
  EXPECT_EQ(edit_distance({}, {1, 2, 3}), (ErrorCounts{0, 0, 3, 3}));
  EXPECT_EQ(edit_distance({1, 2, 3}, {1, 3}), (ErrorCounts{0, 1, 0, 2}));
  EXPECT_EQ(edit_distance({1, 2}, {}), (ErrorCounts{0, 2, 0, 0}));
}

TEST(EditDistanceTest, PrefersSubstitutionOnTies) {
  // [a] vs [b] costs one either way; a substitution is reported.
  EXPECT_EQ(edit_distance({1}, {2}), (ErrorCounts{1, 0, 0, 1}));
  EXPECT_EQ(edit_distance({1, 2}, {2, 3}), (ErrorCounts{2, 0, 0, 2}));
}

TEST(EditDistanceTest, TotalMatchesOracleAndIsAMetric) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    const auto a = random_seq(rng, 7), b = random_seq(rng, 7), c = random_seq(rng, 7);
    const std::size_t ab = edit_distance(a, b).errors();
    EXPECT_EQ(ab, levenshtein(a, b));
    EXPECT_EQ(ab, edit_distance(b, a).errors());
    EXPECT_EQ(ab == 0, a == b);
    EXPECT_LE(edit_distance(a, c).errors(), ab + edit_distance(b, c).errors());
    const auto counts = edit_distance(a, b);
    EXPECT_EQ(counts.ref_length, b.size());
    // hyp = ref - D + I
    EXPECT_EQ(a.size() + counts.deletions, b.size() + counts.insertions);
  }
}

TEST(EditDistanceTest, AlignmentAgreesWithCounts) {
  const auto ops = edit_alignment({1, 2, 3}, {1, 3});
  EXPECT_EQ(ops, (std::vector<EditOp>{EditOp::kMatch, EditOp::kInsertion, EditOp::kMatch}));
}

TEST(ScoreTest, AggregateIsRatioOfSums) {
  // Rates 1/1 and 0/9: the mean of rates is 50%, the pooled rate is 10%.
  const auto r = score_hypotheses({"a", "b"}, {{2}, {1, 2, 3, 4, 1, 2, 3, 4, 1}}, {{1}, {1, 2, 3, 4, 1, 2, 3, 4, 1}});
  EXPECT_DOUBLE_EQ(r.error_rate_percent(), 10.0);
  EXPECT_EQ(r.total.errors(), 1u);
  const auto perfect = score_hypotheses({"a"}, {{1, 2}}, {{1, 2}});
  EXPECT_EQ(perfect.error_rate_percent(), 0.0);
  EXPECT_THROW(score_hypotheses({"a"}, {}, {{1}}), ContractError);
}

ModelConfig tiny(Mode mode) {
  ModelConfig c;
  c.layers = 4;
  c.dim = 16;
  c.heads = 2;
  c.ff_dim = 32;
  c.feat_dim = 16;
  c.vocab = synthetic_vocabulary(12);
  c.inter_k = 2;
  c.mode = mode;
  return c;
}

std::vector<Utterance> tiny_data(std::size_t n) {
  SyntheticTaskSpec s;
  s.train_count = n;
  s.dev_count = 1;
  s.test_count = 1;
  return generate_synthetic(s).train;
}

TEST(ScoreTest, DatasetScoreIsDeterministicAndOrderInvariant) {
  Model m(tiny(Mode::kSelfCond));
  auto utts = tiny_data(20);
  const auto a = score_dataset(m, utts);
  const auto b = score_dataset(m, utts, 3);
  EXPECT_EQ(a.total, b.total);
  std::reverse(utts.begin(), utts.end());
  EXPECT_EQ(score_dataset(m, utts).total, a.total);
  EXPECT_EQ(a.utterances.size(), 20u);
}

TEST(ScoreTest, RecordsAreJsonLines) {
  const Vocabulary v({"a", "b"});
  std::ostringstream os;
  write_score_records(os, score_hypotheses({"u1", "u2"}, {{1}, {}}, {{1, 2}, {2}}), v);
  std::istringstream is(os.str());
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(is, line)) rows.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0]["id"], "u1");
  EXPECT_EQ(rows[0]["hyp"], "a");
  EXPECT_EQ(rows[0]["ref"], "a b");
  EXPECT_EQ(rows[0]["D"], 1);
  EXPECT_EQ(rows[1]["S"], 0);
  EXPECT_EQ(rows[1]["I"], 0);
}

TEST(LatencyTest, SelfComparisonIsUnitSpeedup) {
  Model m(tiny(Mode::kPlainCtc));
  const auto utts = tiny_data(5);
  const auto r = measure_latency(m, utts);
  EXPECT_EQ(speedup(r, r), 1.0);
  EXPECT_EQ(r.seconds.size(), 5u);
  std::size_t frames = 0;
  for (const auto& u : utts) frames += u.features.rows();
  EXPECT_EQ(r.total_frames, frames);
  EXPECT_DOUBLE_EQ(r.rtf(), r.total_seconds / (0.01 * static_cast<double>(frames)));
  EXPECT_FALSE(format_latency(r, "plain").empty());
}

TEST(LatencyTest, DoublingUtterancesRoughlyDoublesTime) {
  Model m(tiny(Mode::kSelfCond));
  const auto one = tiny_data(40);
  auto two = one;
  two.insert(two.end(), one.begin(), one.end());
  auto best = [&](const std::vector<Utterance>& u) {
    double t = 1e300;
    for (int i = 0; i < 5; ++i) t = std::min(t, measure_latency(m, u).total_seconds);
    return t;
  };
  const double ratio = best(two) / best(one);
  EXPECT_GT(ratio, 2.0 * 0.8);
  EXPECT_LT(ratio, 2.0 * 1.2);
}

TEST(InspectTest, UntrainedModelReportIsWellFormed) {
  Model m(tiny(Mode::kSelfCond));
  const auto utts = tiny_data(1);
  const auto r = dump_intermediate(m, utts[0]);
  std::vector<std::size_t> layers;
  for (const auto& l : r.layers) layers.push_back(l.layer);
  auto expected = select_intermediate_layers(4, 2);
  expected.push_back(4);
  EXPECT_EQ(layers, expected);
  EXPECT_EQ(r.reference, utts[0].labels);
  EXPECT_FALSE(r.text.empty());
  for (const auto& l : r.layers) EXPECT_EQ(l.vs_reference, edit_distance(l.tokens, utts[0].labels));
}

TEST(InspectTest, PlainModelHasNoIntermediatePredictions) {
  Model m(tiny(Mode::kPlainCtc));
  EXPECT_THROW(dump_intermediate(m, tiny_data(1)[0]), ContractError);
}

}  // namespace
}  // namespace sctc
