// sctc/model.h
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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sctc/autograd.h"
#include "sctc/ctc.h"
#include "sctc/encoder.h"

namespace sctc {

// plain-ctc: final-layer CTC only. interctc: intermediate CTC losses, layer
// outputs pass straight through. selfcond: intermediate predictions are
// projected back and added to the next layer's input.
enum class Mode { kPlainCtc, kInterCtc, kSelfCond };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

using KeyValues = std::map<std::string, std::string>;

struct ModelConfig {
  std::size_t layers = 18;
  std::size_t dim = 256;
  std::size_t heads = 4;
  std::size_t ff_dim = 1024;
  std::size_t feat_dim = 80;
  Vocabulary vocab;
  std::size_t inter_k = 5;
  double lambda = 0.5;
  Mode mode = Mode::kSelfCond;
  Activation activation = Activation::kRelu;
  std::uint64_t seed = 1;

  void validate() const;
  // Keys are prefixed "model." so the block can be merged into run configs.
  KeyValues to_key_values() const;
  static ModelConfig from_key_values(const KeyValues& kv);
};

// Layers (1-based) whose outputs get an intermediate prediction:
// floor(k * L / (K + 1)) for k = 1..K, ascending and distinct.
std::vector<std::size_t> select_intermediate_layers(std::size_t layers, std::size_t k);

// One head serves every selected layer and the final layer. in_proj exists
// only in selfcond mode and is shared by every conditioned layer.
struct HeadParams {
  NormParams norm;
  LinearParams out_proj;  // D -> |V'|
  LinearParams in_proj;   // |V'| -> D
};

struct ForwardTrace {
  std::vector<std::size_t> layers;  // selected layers, matches intermediate
  std::vector<Var> intermediate;    // log posteriors per selected layer
  Var final;                        // log posteriors of layer L
  std::vector<Var> hidden;          // layer outputs when requested
};

// Accumulated wall time per forward stage, in seconds.
struct StageTimes {
  double embed = 0.0;
  double layers = 0.0;
  double conditioning = 0.0;
  double final_head = 0.0;
};

struct ForwardOptions {
  // Intermediate grids are needed for training and inspection; inference in
  // plain-ctc and interctc mode can skip them because they never reach Z_L.
  bool intermediate = true;
  bool keep_hidden = false;
  StageTimes* times = nullptr;
};

// log_softmax(out_proj(norm(x)))
Var prediction_head(Var x_out, const HeadParams& head);
// selfcond: norm(x) + in_proj(exp(z)); otherwise x unchanged.
Var condition_input(Var x_out, Var log_posteriors, const HeadParams& head, Mode mode);

class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const HeadParams& head() const { return head_; }
  const std::vector<std::size_t>& selected_layers() const { return selected_; }
  const std::vector<EncoderLayerParams>& encoder_layers() const { return layers_; }
  const LinearParams& embedding() const { return embed_; }

  // features [B * P, feat_dim]
  ForwardTrace forward(Graph& g, const Tensor& features, const PadMask& mask,
                       const ForwardOptions& opts = {}) const;

  // Final grid for a single utterance [S, feat_dim].
  PosteriorGrid infer(const Tensor& features, StageTimes* times = nullptr) const;

  // Copies values for every parameter; names and shapes must match exactly.
  void load(const std::vector<std::pair<std::string, Tensor>>& values);

 private:
  ModelConfig config_;
  ParameterStore params_;
  LinearParams embed_;
  std::vector<EncoderLayerParams> layers_;
  HeadParams head_;
  std::vector<std::size_t> selected_;
};

// Graph-level losses. weights[b] scales utterance b (normally 1/B).
Var intermediate_loss(const ForwardTrace& trace, const PadMask& mask,
                      std::span<const LabelSequence> labels, std::span<const double> weights);

struct LossTerms {
  Var total;
  Var final;
  std::vector<Var> intermediate;  // per selected layer
};

// (1 - lambda) * final + lambda * mean(intermediate). With no intermediate
// grids (plain-ctc) the total is the final-layer loss.
LossTerms total_loss(const ForwardTrace& trace, const PadMask& mask,
                     std::span<const LabelSequence> labels, std::span<const double> weights,
                     double lambda);

// The same objective on standalone grids.
double intermediate_loss(std::span<const PosteriorGrid> grids, const LabelSequence& y);
double total_loss(const PosteriorGrid& final_grid, std::span<const PosteriorGrid> intermediate,
                  const LabelSequence& y, double lambda);

}  // namespace sctc
