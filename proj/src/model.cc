// src/model.cc
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

#include "sctc/model.h"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <sstream>

#include "sctc/error.h"
#include "sctc/ops.h"

namespace sctc {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw InvalidConfig("bad value for " + key + ": '" + text + "'");
  }
  return value;
}

}  // namespace

std::string to_string(Mode m) {
  switch (m) {
    case Mode::kPlainCtc: return "plain-ctc";
    case Mode::kInterCtc: return "interctc";
    case Mode::kSelfCond: return "selfcond";
  }
  return "?";
}

Mode parse_mode(const std::string& s) {
  if (s == "plain-ctc") return Mode::kPlainCtc;
  if (s == "interctc") return Mode::kInterCtc;
  if (s == "selfcond") return Mode::kSelfCond;
  throw InvalidConfig("unknown mode '" + s + "' (expected plain-ctc, interctc or selfcond)");
}

void ModelConfig::validate() const {
  if (layers == 0) throw InvalidConfig("model.layers must be at least 1");
  if (dim == 0 || dim % 2 != 0) throw InvalidConfig("model.dim must be positive and even");
  if (heads == 0 || dim % heads != 0) throw InvalidConfig("model.dim must be divisible by model.heads");
  if (ff_dim == 0) throw InvalidConfig("model.ff_dim must be positive");
  if (feat_dim == 0) throw InvalidConfig("model.feat_dim must be positive");
  if (vocab.size() == 0) throw InvalidConfig("model.vocab is empty");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidConfig("model.lambda must lie in [0, 1]");
  if (mode != Mode::kPlainCtc && (inter_k < 1 || inter_k + 1 > layers)) {
    throw InvalidConfig("model.inter_k must satisfy 1 <= K <= L-1 for mode " + to_string(mode));
  }
}

KeyValues ModelConfig::to_key_values() const {
  std::string v;
  for (std::size_t i = 0; i < vocab.tokens().size(); ++i) v += (i ? " " : "") + vocab.tokens()[i];
  return {{"model.layers", std::to_string(layers)},
          {"model.dim", std::to_string(dim)},
          {"model.heads", std::to_string(heads)},
          {"model.ff_dim", std::to_string(ff_dim)},
          {"model.feat_dim", std::to_string(feat_dim)},
          {"model.vocab", v},
          {"model.inter_k", std::to_string(inter_k)},
          {"model.lambda", format_double(lambda)},
          {"model.mode", to_string(mode)},
          {"model.activation", to_string(activation)},
          {"model.seed", std::to_string(seed)}};
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  ModelConfig c;
  for (const auto& [key, value] : kv) {
    if (key.rfind("model.", 0) != 0) continue;
    if (key == "model.layers") c.layers = parse_number<std::size_t>(key, value);
    else if (key == "model.dim") c.dim = parse_number<std::size_t>(key, value);
    else if (key == "model.heads") c.heads = parse_number<std::size_t>(key, value);
    else if (key == "model.ff_dim") c.ff_dim = parse_number<std::size_t>(key, value);
    else if (key == "model.feat_dim") c.feat_dim = parse_number<std::size_t>(key, value);
    else if (key == "model.inter_k") c.inter_k = parse_number<std::size_t>(key, value);
    else if (key == "model.lambda") c.lambda = parse_number<double>(key, value);
    else if (key == "model.seed") c.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "model.mode") c.mode = parse_mode(value);
    else if (key == "model.activation") c.activation = parse_activation(value);
    else if (key == "model.vocab") {
      std::istringstream is(value);
      std::vector<std::string> toks;
      for (std::string t; is >> t;) toks.push_back(t);
      c.vocab = Vocabulary(std::move(toks));
    } else {
      throw InvalidConfig("unknown config key: " + key);
    }
  }
  return c;
}

std::vector<std::size_t> select_intermediate_layers(std::size_t layers, std::size_t k) {
  if (k < 1 || k + 1 > layers) {
    throw InvalidConfig("intermediate layer count K=" + std::to_string(k) + " outside [1, " +
                        std::to_string(layers > 0 ? layers - 1 : 0) + "]");
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i <= k; ++i) {
    const std::size_t layer = i * layers / (k + 1);
    // the step L/(K+1) is at least 1 for K < L, so repeats cannot occur
    if (out.empty() || out.back() != layer) out.push_back(layer);
  }
  return out;
}

Var prediction_head(Var x_out, const HeadParams& head) {
  return log_softmax(linear(norm(x_out, head.norm), head.out_proj));
}

Var condition_input(Var x_out, Var log_posteriors, const HeadParams& head, Mode mode) {
  if (mode != Mode::kSelfCond) return x_out;
  if (head.in_proj.weight == nullptr) throw ContractError("selfcond head has no input projection");
  return add(norm(x_out, head.norm), linear(exp(log_posteriors), head.in_proj));
}

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::uint64_t seed = config_.seed;
  embed_ = make_linear(params_, "embed", config_.feat_dim, config_.dim, seed);
  for (std::size_t l = 0; l < config_.layers; ++l) {
    layers_.push_back(make_encoder_layer(params_, "layer" + std::to_string(l + 1), config_.dim,
                                         config_.ff_dim, seed));
  }
  head_.norm = make_norm(params_, "head.norm", config_.dim);
  head_.out_proj = make_linear(params_, "head.out_proj", config_.dim, config_.vocab.classes(), seed);
  if (config_.mode == Mode::kSelfCond) {
    head_.in_proj = make_linear(params_, "head.in_proj", config_.vocab.classes(), config_.dim, seed);
  }
  if (config_.mode != Mode::kPlainCtc) {
    selected_ = select_intermediate_layers(config_.layers, config_.inter_k);
  }
}

ForwardTrace Model::forward(Graph& g, const Tensor& features, const PadMask& mask,
                            const ForwardOptions& opts) const {
  mask.validate();
  if (features.rank() != 2 || features.cols() != config_.feat_dim || features.rows() != mask.rows()) {
    throw InvalidShape("model input " + shape_string(features.shape()) + " does not match [" +
                       std::to_string(mask.rows()) + "," + std::to_string(config_.feat_dim) + "]");
  }
  const EncoderOptions enc{config_.heads, config_.activation};
  const bool need_grids = config_.mode == Mode::kSelfCond || opts.intermediate;
  StageTimes* t = opts.times;

  ForwardTrace trace;
  auto start = Clock::now();
  Var x = embed_input(g.constant(features), embed_, mask);
  if (t) t->embed += seconds_since(start);

  auto next_selected = selected_.begin();
  for (std::size_t l = 1; l <= config_.layers; ++l) {
    start = Clock::now();
    x = encoder_layer(x, layers_[l - 1], enc, mask);
    if (t) t->layers += seconds_since(start);
    if (opts.keep_hidden) trace.hidden.push_back(x);
    if (next_selected != selected_.end() && *next_selected == l) {
      ++next_selected;
      if (!need_grids) continue;
      start = Clock::now();
      if (config_.mode == Mode::kSelfCond) {
        // one normalisation feeds both the head and the injection
        Var normed = norm(x, head_.norm);
        Var z = log_softmax(linear(normed, head_.out_proj));
        x = add(normed, linear(exp(z), head_.in_proj));
        trace.intermediate.push_back(z);
      } else {
        trace.intermediate.push_back(prediction_head(x, head_));
      }
      trace.layers.push_back(l);
      if (t) t->conditioning += seconds_since(start);
    }
  }
  start = Clock::now();
  trace.final = prediction_head(x, head_);
  if (t) t->final_head += seconds_since(start);
  return trace;
}

PosteriorGrid Model::infer(const Tensor& features, StageTimes* times) const {
  Graph g;
  ForwardOptions opts;
  opts.intermediate = false;
  opts.times = times;
  ForwardTrace trace = forward(g, features, PadMask::single(features.rows()), opts);
  return PosteriorGrid::from_log_probs(trace.final.value());
}

void Model::load(const std::vector<std::pair<std::string, Tensor>>& values) {
  if (values.size() != params_.size()) {
    throw FormatError("parameter count mismatch: model has " + std::to_string(params_.size()) +
                      ", source has " + std::to_string(values.size()));
  }
  for (const auto& [name, tensor] : values) {
    Parameter* p = params_.find(name);
    if (p == nullptr) throw FormatError("unexpected parameter: " + name);
    if (p->value.shape() != tensor.shape()) {
      throw FormatError("shape mismatch for " + name + ": " + shape_string(tensor.shape()) +
                        " vs " + shape_string(p->value.shape()));
    }
    p->value = tensor;
  }
}

Var intermediate_loss(const ForwardTrace& trace, const PadMask& mask,
                      std::span<const LabelSequence> labels, std::span<const double> weights) {
  if (trace.intermediate.empty()) throw ContractError("trace has no intermediate predictions");
  Var acc = ctc_loss(trace.intermediate[0], mask, labels, weights);
  for (std::size_t i = 1; i < trace.intermediate.size(); ++i) {
    acc = add(acc, ctc_loss(trace.intermediate[i], mask, labels, weights));
  }
  return scale(acc, 1.0 / static_cast<double>(trace.intermediate.size()));
}

LossTerms total_loss(const ForwardTrace& trace, const PadMask& mask,
                     std::span<const LabelSequence> labels, std::span<const double> weights,
                     double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidConfig("lambda must lie in [0, 1]");
  LossTerms terms;
  terms.final = ctc_loss(trace.final, mask, labels, weights);
  if (trace.intermediate.empty()) {
    terms.total = terms.final;
    return terms;
  }
  for (Var z : trace.intermediate) terms.intermediate.push_back(ctc_loss(z, mask, labels, weights));
  Var inter = terms.intermediate[0];
  for (std::size_t i = 1; i < terms.intermediate.size(); ++i) inter = add(inter, terms.intermediate[i]);
  inter = scale(inter, 1.0 / static_cast<double>(terms.intermediate.size()));
  terms.total = add(scale(terms.final, 1.0 - lambda), scale(inter, lambda));
  return terms;
}

double intermediate_loss(std::span<const PosteriorGrid> grids, const LabelSequence& y) {
  if (grids.empty()) throw ContractError("no intermediate grids");
  double total = 0.0;
  for (const auto& g : grids) total += ctc_loss(g, y).loss;
  return total / static_cast<double>(grids.size());
}

double total_loss(const PosteriorGrid& final_grid, std::span<const PosteriorGrid> intermediate,
                  const LabelSequence& y, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidConfig("lambda must lie in [0, 1]");
  const double final_loss = ctc_loss(final_grid, y).loss;
  if (intermediate.empty()) return final_loss;
  return (1.0 - lambda) * final_loss + lambda * intermediate_loss(intermediate, y);
}

}  // namespace sctc
