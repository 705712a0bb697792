// tests/train_test.cc
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
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <vector>

#include "sctc/data.h"
#include "sctc/error.h"
#include "sctc/train.h"

namespace sctc {
namespace {

namespace fs = std::filesystem;

SyntheticTaskSpec tiny_spec() {
  SyntheticTaskSpec s;
  s.train_count = 16;
  s.dev_count = 4;
  s.test_count = 4;
  s.feat_dim = 8;
  s.seed = 5;
  return s;
}

ModelConfig tiny_model(const Dataset& data, Mode mode = Mode::kSelfCond) {
  ModelConfig c;
  c.layers = 2;
  c.dim = 16;
  c.heads = 2;
  c.ff_dim = 32;
  c.feat_dim = 8;
  c.vocab = data.vocab;
  c.inter_k = 1;
  c.mode = mode;
  c.seed = 9;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.batch_size = 4;
  t.accum = 1;
  t.warmup = 20;
  t.lr_factor = 2.0;
  return t;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("sctc_train_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

TEST(LrScheduleTest, ArmsMeetAtWarmup) {
  const std::size_t w = 400, d = 64;
  const double peak = lr_schedule(w, w, d);
  EXPECT_NEAR(peak, std::pow(double(d), -0.5) * std::pow(double(w), -0.5), 1e-15);
  EXPECT_NEAR(lr_schedule(2 * w, w, d) / peak, 1.0 / std::sqrt(2.0), 1e-12);
  for (std::size_t s = 1; s < w; ++s) EXPECT_LT(lr_schedule(s, w, d), lr_schedule(s + 1, w, d));
  for (std::size_t s = w; s < 3 * w; ++s) EXPECT_GT(lr_schedule(s, w, d), lr_schedule(s + 1, w, d));
  EXPECT_THROW(lr_schedule(0, w, d), ContractError);
}

TEST(OptimizerTest, ZeroGradientLeavesParameters) {
  ParameterStore store;
  store.add("w", Tensor::uniform({3, 2}, -1, 1, 1));
  const Tensor before = store.at("w").value;
  auto st = make_optimizer(store, 0.9, 0.98, 1e-9);
  for (int i = 0; i < 3; ++i) optimizer_step(store, st, 0.1);
  EXPECT_EQ(store.at("w").value, before);
}

TEST(OptimizerTest, HandComputedScalarStep) {
  ParameterStore store;
  Parameter& p = store.add("x", Tensor({1}, {0.5}));
  p.grad[0] = 0.2;
  auto st = make_optimizer(store, 0.9, 0.98, 1e-9);
  optimizer_step(store, st, 0.01);
  // m = 0.1 g, v = 0.02 g^2; bias correction restores g and g^2.
  const double m_hat = (0.1 * 0.2) / 0.1;
  const double v_hat = (0.02 * 0.04) / (1 - 0.98);
  EXPECT_NEAR(p.value[0], 0.5 - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-9), 1e-12);
  p.grad[0] = -0.1;
  const double m2 = 0.9 * 0.02 + 0.1 * -0.1;
  const double v2 = 0.98 * 0.0008 + 0.02 * 0.01;
  const double expected = p.value[0] - 0.01 * (m2 / (1 - 0.81)) / (std::sqrt(v2 / (1 - 0.98 * 0.98)) + 1e-9);
  optimizer_step(store, st, 0.01);
  EXPECT_NEAR(p.value[0], expected, 1e-12);
}

TEST(OptimizerTest, NanGradientNamesParameter) {
  ParameterStore store;
  store.add("good", Tensor::zeros({2}));
  Parameter& bad = store.add("layer3.w_q", Tensor::zeros({2}));
  bad.grad[1] = std::nan("");
  auto st = make_optimizer(store, 0.9, 0.98, 1e-9);
  try {
    optimizer_step(store, st, 0.1);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("layer3.w_q"), std::string::npos);
  }
  EXPECT_EQ(st.step, 0u);
}

TEST(OptimizerTest, ClipScalesToNorm) {
  ParameterStore store;
  Parameter& p = store.add("w", Tensor::zeros({2}));
  p.grad = Tensor({2}, {3, 4});
  EXPECT_EQ(clip_gradients(store, 1.0), 5.0);
  EXPECT_NEAR(p.grad[0], 0.6, 1e-15);
  EXPECT_NEAR(p.grad[1], 0.8, 1e-15);
}

TEST(TrainEpochTest, TenStepsAreBitwiseReproducible) {
  const Dataset data = generate_synthetic(tiny_spec());
  auto run = [&] {
    Model m(tiny_model(data));
    auto st = make_optimizer(m.params(), 0.9, 0.98, 1e-9);
    const auto batches = make_batches(data.train, 4, 3);
    const TrainConfig cfg = tiny_train();
    while (st.step < 10) train_epoch(m, batches, 1, cfg, st);
    std::vector<Tensor> out;
    for (const auto& p : m.params()) out.push_back(p.value);
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(TrainEpochTest, AccumulatingIdenticalBatchesEqualsOneStep) {
  const Dataset data = generate_synthetic(tiny_spec());
  const auto batches = make_batches(data.train, 4, 3);
  const TrainConfig cfg = tiny_train();
  Model a(tiny_model(data));
  Model b(tiny_model(data));
  auto sa = make_optimizer(a.params(), 0.9, 0.98, 1e-9);
  auto sb = make_optimizer(b.params(), 0.9, 0.98, 1e-9);
  const std::vector<Batch> twice{batches[0], batches[0]};
  train_epoch(a, std::span(batches).first(1), 1, cfg, sa);
  train_epoch(b, twice, 2, cfg, sb);
  EXPECT_EQ(sa.step, 1u);
  EXPECT_EQ(sb.step, 1u);
  auto pb = b.params().begin();
  for (const auto& p : a.params()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) EXPECT_NEAR(p.value[i], pb->value[i], 1e-12) << p.name;
    ++pb;
  }
}

TEST(TrainEpochTest, AccumulationOfOneIsPlainStepping) {
  const Dataset data = generate_synthetic(tiny_spec());
  const auto batches = make_batches(data.train, 4, 3);
  const TrainConfig cfg = tiny_train();
  Model a(tiny_model(data));
  auto sa = make_optimizer(a.params(), 0.9, 0.98, 1e-9);
  train_epoch(a, batches, 1, cfg, sa);
  Model b(tiny_model(data));
  auto sb = make_optimizer(b.params(), 0.9, 0.98, 1e-9);
  for (const auto& batch : batches) {
    b.params().zero_grad();
    accumulate_batch(b, batch, 1.0);
    clip_gradients(b.params(), cfg.clip_norm);
    optimizer_step(b.params(), sb, lr_schedule(sb.step + 1, cfg.warmup, 16, cfg.lr_factor));
  }
  auto pb = b.params().begin();
  for (const auto& p : a.params()) EXPECT_EQ(p.value, (pb++)->value) << p.name;
}

TEST(TrainEpochTest, LossDecreasesOnOverfitSet) {
  SyntheticTaskSpec spec = tiny_spec();
  spec.train_count = 10;
  const Dataset data = generate_synthetic(spec);
  Model m(tiny_model(data));
  auto st = make_optimizer(m.params(), 0.9, 0.98, 1e-9);
  const auto batches = make_batches(data.train, 10, 1);
  TrainConfig cfg = tiny_train();
  std::vector<double> losses;
  while (st.step < 50) {
    train_epoch(m, batches, 1, cfg, st, [&](const StepRecord& r) { losses.push_back(r.total); });
  }
  ASSERT_EQ(losses.size(), 50u);
  EXPECT_LT(losses.back(), 0.5 * losses.front());
  EXPECT_EQ(losses.size(), 50u);
}

TEST(TrainEpochTest, LogsIntermediateLosses) {
  const Dataset data = generate_synthetic(tiny_spec());
  Model m(tiny_model(data));
  auto st = make_optimizer(m.params(), 0.9, 0.98, 1e-9);
  const auto batches = make_batches(data.train, 4, 3);
  std::vector<StepRecord> recs;
  train_epoch(m, batches, 2, tiny_train(), st, [&](const StepRecord& r) { recs.push_back(r); });
  ASSERT_EQ(recs.size(), 2u);
  for (const auto& r : recs) {
    ASSERT_EQ(r.intermediate.size(), 1u);
    EXPECT_NEAR(r.total, 0.5 * r.final_ctc + 0.5 * r.intermediate[0], 1e-9);
  }
  EXPECT_THROW(train_epoch(m, batches, 0, tiny_train(), st), InvalidConfig);
}

Checkpoint checkpoint_with(double value, double metric, std::size_t epoch) {
  Checkpoint c;
  c.params = {{"a", Tensor::constant({2, 2}, value)}, {"b", Tensor::constant({3}, -value)}};
  c.metric = metric;
  c.epoch = epoch;
  return c;
}

TEST(AveragingTest, IdenticalCheckpointsAreIdentity) {
  Checkpoint c;
  c.params = {{"w", Tensor::uniform({4, 5}, -3, 3, 1)}, {"b", Tensor::uniform({5}, -3, 3, 2)}};
  const std::vector<Checkpoint> copies(7, c);
  const auto avg = average_checkpoints(copies, 7);
  for (std::size_t i = 0; i < avg.size(); ++i) EXPECT_EQ(avg[i].second, c.params[i].second);
}

TEST(AveragingTest, TwoCheckpointsGiveMidpoint) {
  Checkpoint p, q;
  p.params = {{"w", Tensor::uniform({3, 3}, -2, 2, 3)}};
  q.params = {{"w", Tensor::uniform({3, 3}, -2, 2, 4)}};
  const std::vector<Checkpoint> both{p, q};
  const auto avg = average_checkpoints(both, 2);
  for (std::size_t k = 0; k < 9; ++k)
    EXPECT_DOUBLE_EQ(avg[0].second[k], (p.params[0].second[k] + q.params[0].second[k]) / 2.0);
}

TEST(AveragingTest, SelectsSmallestMetrics) {
  std::vector<double> metrics{9.5, 3.25, 7.0, 1.5, 8.0, 4.75, 2.0, 6.5, 5.0, 10.0};
  std::mt19937_64 rng(11);
  std::shuffle(metrics.begin(), metrics.end(), rng);
  std::vector<Checkpoint> cks;
  for (std::size_t i = 0; i < metrics.size(); ++i) cks.push_back(checkpoint_with(double(i), metrics[i], i + 1));
  for (std::size_t n = 1; n <= 10; ++n) {
    std::vector<double> sorted = metrics;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> picked;
    for (std::size_t i : select_top(cks, n)) picked.push_back(cks[i].metric);
    std::sort(picked.begin(), picked.end());
    EXPECT_EQ(picked, std::vector<double>(sorted.begin(), sorted.begin() + n));
  }
  EXPECT_THROW(select_top({}, 1), ContractError);
  EXPECT_THROW(select_top(cks, 11), ContractError);
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  Checkpoint c = checkpoint_with(0.1, 12.5, 3);
  c.params[0].second = Tensor::uniform({2, 2}, -1, 1, 5);
  c.config = {{"model.layers", "2"}, {"data_dir", "/tmp/x"}};
  const std::string bytes = serialize_checkpoint(c);
  EXPECT_EQ(bytes.substr(0, 4), "SCTC");
  const Checkpoint back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back.params, c.params);
  EXPECT_EQ(back.config, c.config);
  EXPECT_EQ(back.metric, 12.5);
  EXPECT_EQ(back.epoch, 3u);
  EXPECT_EQ(serialize_checkpoint(back), bytes);

  const fs::path dir = temp_dir("roundtrip");
  write_checkpoint(dir / "a.sctc", c);
  write_checkpoint(dir / "b.sctc", read_checkpoint(dir / "a.sctc"));
  EXPECT_EQ(slurp(dir / "a.sctc"), slurp(dir / "b.sctc"));
  fs::remove_all(dir);
}

TEST(CheckpointTest, CorruptBytesRejected) {
  const std::string bytes = serialize_checkpoint(checkpoint_with(1.0, 0.0, 1));
  EXPECT_THROW(deserialize_checkpoint("XXXX" + bytes.substr(4)), FormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), FormatError);
}

TEST(CheckpointTest, ModelRestoresFromCheckpoint) {
  const Dataset data = generate_synthetic(tiny_spec());
  Model m(tiny_model(data));
  for (auto& p : m.params()) p.value[0] += 0.25;
  const Checkpoint c = make_checkpoint(m, {}, 1.0, 1);
  Model back = load_model(c);
  const Tensor x = data.dev[0].features;
  EXPECT_EQ(back.infer(x).log_probs(), m.infer(x).log_probs());
}

TEST(RunTrainingTest, WritesArtifacts) {
  const Dataset data = generate_synthetic(tiny_spec());
  const fs::path dir = temp_dir("run");
  TrainRun run;
  run.model = tiny_model(data);
  run.train = tiny_train();
  run.train.epochs = 3;
  run.train.average_top = 2;
  run.out_dir = dir;
  Model m(run.model);
  const TrainResult r = run_training(run, m, data.train, data.dev);
  EXPECT_EQ(r.epochs.size(), 3u);
  EXPECT_TRUE(fs::exists(dir / "metrics.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "model.sctc"));
  EXPECT_TRUE(fs::exists(dir / "epoch003.sctc"));
  for (const auto& p : m.params()) EXPECT_TRUE(p.value.all_finite()) << p.name;
  fs::remove_all(dir);
}

}  // namespace
}  // namespace sctc
