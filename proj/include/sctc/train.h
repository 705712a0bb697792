// sctc/train.h
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
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "sctc/data.h"
#include "sctc/model.h"

namespace sctc {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  std::size_t accum = 2;
  double lr_factor = 5.0;
  std::size_t warmup = 1000;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  double clip_norm = 5.0;  // 0 disables clipping
  std::size_t average_top = 10;
  std::uint64_t seed = 1;

  void validate() const;
  KeyValues to_key_values() const;  // keys prefixed "train."
  static TrainConfig from_key_values(const KeyValues& kv);
};

// factor * D^-0.5 * min(step^-0.5, step * warmup^-1.5); peaks at step = warmup.
double lr_schedule(std::size_t step, std::size_t warmup, std::size_t dim, double factor = 1.0);

struct OptimizerState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::size_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

OptimizerState make_optimizer(const ParameterStore& params, double beta1, double beta2, double eps);

// One bias-corrected adaptive-moment update from the parameters' grads.
// Throws NumericError naming the first parameter with a non-finite gradient.
void optimizer_step(ParameterStore& params, OptimizerState& state, double lr);

// Rescales all gradients so their joint L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_gradients(ParameterStore& params, double max_norm);

struct StepRecord {
  std::size_t step = 0;
  double lr = 0.0;
  double total = 0.0;
  double final_ctc = 0.0;
  std::vector<double> intermediate;  // per selected layer
  std::size_t infeasible = 0;
};

struct EpochMetrics {
  std::size_t steps = 0;
  double total = 0.0;      // mean over micro-batches
  double final_ctc = 0.0;
  std::vector<double> intermediate;
  std::size_t infeasible = 0;
  std::size_t skipped_batches = 0;
};

using StepCallback = std::function<void(const StepRecord&)>;

// Gradients of accum_n consecutive micro-batches are summed with weight
// 1/accum_n before each optimizer step. Utterances that cannot be aligned are
// dropped from their batch; batches with none left are skipped.
EpochMetrics train_epoch(Model& model, std::span<const Batch> batches, std::size_t accum_n,
                         const TrainConfig& cfg, OptimizerState& state, const StepCallback& on_step = {});

// Loss and gradients of one micro-batch, accumulated into the parameters
// with the given weight. Returns the loss terms' values.
StepRecord accumulate_batch(Model& model, const Batch& batch, double weight);

struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> params;
  KeyValues config;
  double metric = 0.0;  // validation error rate; lower is better
  std::size_t epoch = 0;
};

Checkpoint make_checkpoint(const Model& model, const KeyValues& run_config, double metric, std::size_t epoch);

// "SCTC", u32 version, u32 count, then per parameter: u32 name length, name,
// u32 rank, u32 dims, f64 values; u32 config length, key=value lines; f64
// metric. All little-endian. The epoch travels in the config block.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin = "<memory>");
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Indices of the top_n lowest metrics; ties go to the later epoch.
std::vector<std::size_t> select_top(std::span<const Checkpoint> checkpoints, std::size_t top_n);
// Elementwise running mean over the selected checkpoints' parameters.
std::vector<std::pair<std::string, Tensor>> average_checkpoints(std::span<const Checkpoint> checkpoints,
                                                                std::size_t top_n);

// Builds a model from a checkpoint's config block and loads its parameters.
Model load_model(const Checkpoint& ckpt);
Model load_model(const std::filesystem::path& path);

struct EpochSummary {
  std::size_t epoch = 0;
  EpochMetrics train;
  double dev_error = 0.0;  // percent
};

struct TrainResult {
  std::vector<EpochSummary> epochs;
  double final_dev_error = 0.0;  // of the averaged model, percent
  std::vector<std::pair<std::string, Tensor>> averaged;
};

struct TrainRun {
  ModelConfig model;
  TrainConfig train;
  KeyValues extra;  // echoed into checkpoints (data path etc.)
  // When set: checkpoints, metrics.jsonl and model.sctc are written here.
  std::filesystem::path out_dir;
  std::ostream* log = nullptr;
};

// Full loop: epochs of train_epoch, dev scoring after each epoch, top-N
// checkpoint averaging at the end. The returned model holds the averaged
// parameters.
TrainResult run_training(const TrainRun& run, Model& model, const std::vector<Utterance>& train,
                         const std::vector<Utterance>& dev);

}  // namespace sctc
