// sctc/ctc.h
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

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sctc/autograd.h"
#include "sctc/tensor.h"

namespace sctc {

// Ids index the extended vocabulary: 0 is the blank, 1..|V| are tokens.
inline constexpr int kBlank = 0;
using LabelSequence = std::vector<int>;
using Alignment = std::vector<int>;

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  std::size_t classes() const { return tokens_.size() + 1; }
  int blank_index() const { return kBlank; }

  int id(std::string_view symbol) const;
  const std::string& symbol(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  LabelSequence encode(std::string_view text) const;  // space separated
  std::string decode(const LabelSequence& ids) const;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  std::vector<std::string> tokens_;
};

// Per-frame log posteriors over the extended vocabulary, [S, |V'|].
class PosteriorGrid {
 public:
  // Rows must exponentiate-and-sum to one within tol.
  static PosteriorGrid from_log_probs(Tensor log_probs, double tol = 1e-9);
  static PosteriorGrid from_logits(const Tensor& logits);

  std::size_t frames() const { return log_probs_.rows(); }
  std::size_t classes() const { return log_probs_.cols(); }
  double log_prob(std::size_t s, std::size_t k) const { return log_probs_.at(s, k); }
  const Tensor& log_probs() const { return log_probs_; }

 private:
  explicit PosteriorGrid(Tensor t) : log_probs_(std::move(t)) {}
  Tensor log_probs_;
};

// Frames needed to emit y: one per label plus one blank between repeats.
std::size_t required_frames(const LabelSequence& y);

struct CtcResult {
  double loss = 0.0;   // +inf when infeasible
  bool feasible = true;
  Tensor occupancy;    // [S, |V'|] state posteriors; zero when infeasible
};

// Negative log-likelihood by log-space forward-backward. The gradient with
// respect to the log posteriors is -occupancy.
CtcResult ctc_loss(const PosteriorGrid& grid, const LabelSequence& y);
CtcResult ctc_loss(std::span<const double> log_probs, std::size_t frames, std::size_t classes,
                   const LabelSequence& y);

// softmax(logits) - occupancy: the loss gradient with respect to the logits
// that produced the grid.
Tensor ctc_logit_gradient(const PosteriorGrid& grid, const CtcResult& result);

// Enumerates all |V'|^S alignments. Throws ContractError above the limit.
double ctc_brute_force(const PosteriorGrid& grid, const LabelSequence& y,
                       std::size_t max_alignments = std::size_t{1} << 22);

LabelSequence collapse(const Alignment& a);

// Per-frame argmax (lowest index wins ties), then collapse.
LabelSequence greedy_decode(const PosteriorGrid& grid);
LabelSequence greedy_decode(std::span<const double> log_probs, std::size_t frames, std::size_t classes);

// Batched CTC over packed utterances. log_probs is [B * P, |V'|]; returns
// sum_b weights[b] * loss_b over feasible utterances. Infeasible utterances
// contribute nothing; per-utterance losses (+inf when infeasible) are written
// to losses when given.
Var ctc_loss(Var log_probs, const PadMask& mask, std::span<const LabelSequence> labels,
             std::span<const double> weights, std::vector<double>* losses = nullptr);

}  // namespace sctc
