// tests/model_test.cc
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

#include <cmath>
#include <set>
#include <vector>

#include "sctc/error.h"
#include "sctc/grad_check.h"
#include "sctc/model.h"
#include "sctc/ops.h"

namespace sctc {
namespace {

ModelConfig small_config(Mode mode, std::size_t layers = 2, std::size_t k = 1) {
  ModelConfig c;
  c.layers = layers;
  c.dim = 16;
  c.heads = 2;
  c.ff_dim = 32;
  c.feat_dim = 6;
  c.vocab = Vocabulary({"a", "b", "c", "d"});
  c.inter_k = k;
  c.lambda = 0.5;
  c.mode = mode;
  c.seed = 3;
  return c;
}

void perturb(Model& m, std::uint64_t seed) {
  for (auto& p : m.params()) {
    const Tensor noise = Tensor::uniform(p.value.shape(), -0.2, 0.2, seed++);
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] += noise[i];
  }
}

std::vector<std::pair<std::string, Tensor>> values_of(const Model& m) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& p : m.params()) out.emplace_back(p.name, p.value);
  return out;
}

TEST(SelectLayersTest, Examples) {
  EXPECT_EQ(select_intermediate_layers(18, 5), (std::vector<std::size_t>{3, 6, 9, 12, 15}));
  EXPECT_EQ(select_intermediate_layers(12, 1), (std::vector<std::size_t>{6}));
  EXPECT_EQ(select_intermediate_layers(12, 5), (std::vector<std::size_t>{2, 4, 6, 8, 10}));
  EXPECT_THROW(select_intermediate_layers(6, 0), InvalidConfig);
  EXPECT_THROW(select_intermediate_layers(6, 6), InvalidConfig);
}

TEST(SelectLayersTest, ExhaustiveAgainstDirectFormula) {
  for (std::size_t L = 2; L <= 64; ++L) {
    for (std::size_t K = 1; K < L; ++K) {
      std::set<std::size_t> expected;
      for (std::size_t k = 1; k <= K; ++k) {
        const std::size_t idx = static_cast<std::size_t>(std::floor(double(k * L) / double(K + 1)));
        if (idx != L) expected.insert(idx);
      }
      const auto got = select_intermediate_layers(L, K);
      EXPECT_EQ(got, std::vector<std::size_t>(expected.begin(), expected.end())) << L << "," << K;
      for (std::size_t l : got) EXPECT_LT(l, L);
    }
  }
}

TEST(ModelConfigTest, ValidationAndRoundTrip) {
  ModelConfig c = small_config(Mode::kSelfCond);
  c.inter_k = 0;
  EXPECT_THROW(c.validate(), InvalidConfig);
  c.inter_k = 2;
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = small_config(Mode::kSelfCond);
  c.lambda = 1.5;
  EXPECT_THROW(c.validate(), InvalidConfig);
  c = small_config(Mode::kInterCtc, 6, 2);
  c.lambda = 0.1;
  const ModelConfig back = ModelConfig::from_key_values(c.to_key_values());
  EXPECT_EQ(back.to_key_values(), c.to_key_values());
  EXPECT_EQ(back.lambda, 0.1);
  EXPECT_EQ(parse_mode("plain-ctc"), Mode::kPlainCtc);
  EXPECT_THROW(parse_mode("ctc"), InvalidConfig);
}

TEST(PredictionHeadTest, ZeroProjectionIsUniform) {
  Model m(small_config(Mode::kSelfCond));
  m.head().out_proj.weight->value.fill(0.0);
  m.head().out_proj.bias->value.fill(0.0);
  Graph g;
  const Tensor z = prediction_head(g.constant(Tensor::uniform({3, 16}, -1, 1, 1)), m.head()).value();
  for (double v : z.values()) EXPECT_NEAR(v, -std::log(5.0), 1e-15);
}

TEST(PredictionHeadTest, RowsNormalized) {
  Model m(small_config(Mode::kSelfCond));
  Graph g;
  const Tensor z = prediction_head(g.constant(Tensor::uniform({7, 16}, -3, 3, 2)), m.head()).value();
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double total = 0.0;
    for (double v : z.row(r)) total += std::exp(v);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(PredictionHeadTest, Gradient) {
  Model m(small_config(Mode::kSelfCond));
  perturb(m, 10);
  const HeadParams& h = m.head();
  const Tensor x = Tensor::uniform({3, 16}, -1, 1, 3);
  const Tensor w = Tensor::uniform({3, 5}, -1, 1, 4);
  std::vector<Parameter*> ps{h.norm.gamma, h.norm.beta, h.out_proj.weight, h.out_proj.bias};
  auto r = grad_check(
      [&](Graph& g) { return sum(mul(prediction_head(g.constant(x), h), g.constant(w))); }, ps);
  EXPECT_LT(r.max_rel_error, 1e-5) << r.worst_param;
}

TEST(ConditionInputTest, InterCtcPassesThrough) {
  Model m(small_config(Mode::kSelfCond));
  Graph g;
  Var x = g.constant(Tensor::uniform({3, 16}, -1, 1, 5));
  Var z = prediction_head(x, m.head());
  Var y = condition_input(x, z, m.head(), Mode::kInterCtc);
  EXPECT_EQ(y.value(), x.value());
  EXPECT_EQ(condition_input(x, z, m.head(), Mode::kPlainCtc).value(), x.value());
}

TEST(ConditionInputTest, ZeroProjectionGivesNorm) {
  Model m(small_config(Mode::kSelfCond));
  m.head().in_proj.weight->value.fill(0.0);
  m.head().in_proj.bias->value.fill(0.0);
  Graph g;
  Var x = g.constant(Tensor::uniform({3, 16}, -1, 1, 6));
  Var z = prediction_head(x, m.head());
  const Tensor conditioned = condition_input(x, z, m.head(), Mode::kSelfCond).value();
  EXPECT_EQ(conditioned, norm(x, m.head().norm).value());
}

TEST(ConditionInputTest, FrameLocality) {
  Model m(small_config(Mode::kSelfCond));
  perturb(m, 20);
  Graph g;
  Var x = g.constant(Tensor::uniform({4, 16}, -1, 1, 7));
  const Tensor z = prediction_head(x, m.head()).value();
  Tensor z2 = z;
  // Swap two class probabilities on frame 2; the row stays normalized.
  std::swap(z2.at(2, 0), z2.at(2, 3));
  const Tensor a = condition_input(x, g.constant(z), m.head(), Mode::kSelfCond).value();
  const Tensor b = condition_input(x, g.constant(z2), m.head(), Mode::kSelfCond).value();
  for (std::size_t r = 0; r < 4; ++r) {
    bool differs = false;
    for (std::size_t c = 0; c < 16; ++c) differs |= a.at(r, c) != b.at(r, c);
    EXPECT_EQ(differs, r == 2) << "row " << r;
  }
}

TEST(ForwardTest, PlainHasNoIntermediateGrids) {
  Model m(small_config(Mode::kPlainCtc));
  Graph g;
  auto trace = m.forward(g, Tensor::uniform({5, 6}, -1, 1, 8), PadMask::single(5));
  EXPECT_TRUE(trace.intermediate.empty());
  EXPECT_EQ(trace.final.shape(), (Shape{5, 5}));
  EXPECT_EQ(m.params().find("head.in_proj.weight"), nullptr);
}

TEST(ForwardTest, SelectedLayersMatchFormula) {
  Model m(small_config(Mode::kSelfCond, 6, 2));
  Graph g;
  auto trace = m.forward(g, Tensor::uniform({5, 6}, -1, 1, 9), PadMask::single(5));
  EXPECT_EQ(trace.layers, select_intermediate_layers(6, 2));
  EXPECT_EQ(trace.intermediate.size(), 2u);
}

TEST(ForwardTest, InterCtcAndPlainGiveIdenticalFinalGrid) {
  for (std::uint64_t u = 0; u < 10; ++u) {
    Model inter(small_config(Mode::kInterCtc, 6, 2));
    perturb(inter, 100 + u);
    Model plain(small_config(Mode::kPlainCtc, 6, 2));
    plain.load(values_of(inter));
    const std::size_t S = 3 + u;
    const Tensor x = Tensor::uniform({S, 6}, -2, 2, 200 + u);
    Graph g1, g2;
    const Tensor a = inter.forward(g1, x, PadMask::single(S)).final.value();
    const Tensor b = plain.forward(g2, x, PadMask::single(S)).final.value();
    EXPECT_EQ(a, b);
  }
}

TEST(ForwardTest, PaddingInvariance) {
  Model m(small_config(Mode::kSelfCond, 4, 2));
  perturb(m, 30);
  const Tensor x = Tensor::uniform({4, 6}, -1, 1, 10);
  Tensor batch = Tensor::uniform({12, 6}, -9, 9, 11);
  for (std::size_t i = 0; i < x.size(); ++i) batch[6 * 6 + i] = x[i];
  Graph g1, g2;
  const Tensor a = m.forward(g1, x, PadMask::single(4)).final.value();
  const Tensor b = m.forward(g2, batch, PadMask{6, {5, 4}}).final.value();
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(a.at(r, c), b.at(6 + r, c), 1e-9);
}

TEST(IntermediateLossTest, MeanOfSeparateLosses) {
  std::vector<PosteriorGrid> grids;
  for (std::uint64_t s = 0; s < 2; ++s) grids.push_back(PosteriorGrid::from_logits(Tensor::uniform({5, 4}, -2, 2, s)));
  const LabelSequence y{1, 3};
  const double expected = (ctc_loss(grids[0], y).loss + ctc_loss(grids[1], y).loss) / 2.0;
  EXPECT_NEAR(intermediate_loss(grids, y), expected, 1e-12);
  EXPECT_NEAR(intermediate_loss(std::span(grids).first(1), y), ctc_loss(grids[0], y).loss, 0.0);
  std::vector<PosteriorGrid> same(3, grids[1]);
  EXPECT_NEAR(intermediate_loss(same, y), ctc_loss(grids[1], y).loss, 1e-12);
}

TEST(TotalLossTest, LambdaEndpointsAndMidpoint) {
  const auto fin = PosteriorGrid::from_logits(Tensor::uniform({2, 3}, -2, 2, 1));
  std::vector<PosteriorGrid> inter{PosteriorGrid::from_logits(Tensor::uniform({2, 3}, -2, 2, 2))};
  const LabelSequence y{2};
  const double f = ctc_loss(fin, y).loss;
  const double i = ctc_loss(inter[0], y).loss;
  EXPECT_EQ(total_loss(fin, inter, y, 0.0), f);
  EXPECT_EQ(total_loss(fin, inter, y, 1.0), i);
  EXPECT_NEAR(total_loss(fin, inter, y, 0.5), (f + i) / 2.0, 1e-12);
  EXPECT_THROW(total_loss(fin, inter, y, -0.1), InvalidConfig);
}

TEST(TotalLossTest, GraphLossIsLinearInLambda) {
  Model m(small_config(Mode::kSelfCond, 6, 2));
  const Tensor x = Tensor::uniform({6, 6}, -1, 1, 12);
  const std::vector<LabelSequence> labels{{1, 2, 4}};
  const std::vector<double> w{1.0};
  double fin = 0.0, inter = 0.0;
  std::vector<double> totals;
  for (double lambda : {0.0, 0.3, 0.8}) {
    Graph g;
    auto trace = m.forward(g, x, PadMask::single(6));
    auto terms = total_loss(trace, PadMask::single(6), labels, w, lambda);
    fin = terms.final.value().item();
    inter = (terms.intermediate[0].value().item() + terms.intermediate[1].value().item()) / 2.0;
    totals.push_back(terms.total.value().item());
  }
  EXPECT_NEAR((totals[1] - totals[0]) / 0.3, inter - fin, 1e-9);
  EXPECT_NEAR((totals[2] - totals[1]) / 0.5, inter - fin, 1e-9);
  EXPECT_EQ(totals[0], fin);
}

TEST(GradientFlowTest, HeadReceivesGradientAtLambdaZero) {
  Model m(small_config(Mode::kSelfCond, 4, 1));
  const Tensor x = Tensor::uniform({6, 6}, -1, 1, 13);
  const std::vector<LabelSequence> labels{{1, 2, 3}};
  const std::vector<double> w{1.0};
  Graph g;
  auto trace = m.forward(g, x, PadMask::single(6));
  g.backward(total_loss(trace, PadMask::single(6), labels, w, 0.0).total);
  double norm = 0.0;
  for (double v : m.head().in_proj.weight->grad.values()) norm += v * v;
  EXPECT_GT(norm, 0.0);
}

TEST(GradientFlowTest, EndToEndMatchesFiniteDifferences) {
  Model m(small_config(Mode::kSelfCond, 2, 1));
  perturb(m, 40);
  const Tensor x = Tensor::uniform({4, 6}, -1, 1, 14);
  const std::vector<LabelSequence> labels{{1, 3}};
  const std::vector<double> w{1.0};
  std::vector<Parameter*> ps;
  for (auto& p : m.params()) ps.push_back(&p);
  auto r = grad_check(
      [&](Graph& g) {
        auto trace = m.forward(g, x, PadMask::single(4));
        return total_loss(trace, PadMask::single(4), labels, w, 0.5).total;
      },
      ps);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

}  // namespace
}  // namespace sctc
