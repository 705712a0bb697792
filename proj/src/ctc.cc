// src/ctc.cc
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

#include "sctc/ctc.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>
#include <unordered_set>

#include "sctc/error.h"

namespace sctc {
namespace {

// log(0) sentinel; arithmetic on it is clamped so it never drifts to -inf.
constexpr double kLogZero = -1e30;

double log_add(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b <= kLogZero) return a;
  return a + std::log1p(std::exp(b - a));
}

double log_mul(double a, double b) {
  if (a <= kLogZero || b <= kLogZero) return kLogZero;
  return a + b;
}

void check_labels(const LabelSequence& y, std::size_t classes) {
  for (int id : y) {
    if (id <= kBlank || static_cast<std::size_t>(id) >= classes) {
      throw ContractError("label id " + std::to_string(id) + " outside [1, " +
                          std::to_string(classes - 1) + "]");
    }
  }
}

}  // namespace

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  std::unordered_set<std::string> seen;
  for (const auto& t : tokens_) {
    if (t.empty() || t.find_first_of(" \t\n") != std::string::npos) {
      throw InvalidConfig("vocabulary symbol must be non-empty without whitespace: '" + t + "'");
    }
    if (t == "<blank>") throw InvalidConfig("'<blank>' is reserved");
    if (!seen.insert(t).second) throw InvalidConfig("duplicate vocabulary symbol: " + t);
  }
}

int Vocabulary::id(std::string_view symbol) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i] == symbol) return static_cast<int>(i) + 1;
  }
  throw FormatError("unknown token '" + std::string(symbol) + "'");
}

const std::string& Vocabulary::symbol(int id) const {
  static const std::string blank = "<blank>";
  if (id == kBlank) return blank;
  if (id < 0 || static_cast<std::size_t>(id) > tokens_.size()) {
    throw ContractError("token id out of range: " + std::to_string(id));
  }
  return tokens_[static_cast<std::size_t>(id) - 1];
}

LabelSequence Vocabulary::encode(std::string_view text) const {
  LabelSequence out;
  std::istringstream is{std::string(text)};
  std::string tok;
  while (is >> tok) out.push_back(id(tok));
  return out;
}

std::string Vocabulary::decode(const LabelSequence& ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += symbol(ids[i]);
  }
  return out;
}

PosteriorGrid PosteriorGrid::from_log_probs(Tensor log_probs, double tol) {
  if (log_probs.rank() != 2) throw InvalidShape("posterior grid must be [S, |V'|]");
  if (log_probs.cols() < 2) throw InvalidShape("posterior grid needs blank plus at least one token");
  for (std::size_t s = 0; s < log_probs.rows(); ++s) {
    double total = 0.0;
    for (double v : log_probs.row(s)) total += std::exp(v);
    if (std::abs(total - 1.0) > tol) {
      throw ContractError("posterior row " + std::to_string(s) + " sums to " + std::to_string(total));
    }
  }
  return PosteriorGrid(std::move(log_probs));
}

PosteriorGrid PosteriorGrid::from_logits(const Tensor& logits) {
  if (logits.rank() != 2) throw InvalidShape("logits must be [S, |V'|]");
  Tensor out(logits.shape());
  for (std::size_t s = 0; s < logits.rows(); ++s) {
    auto in = logits.row(s);
    const double mx = *std::max_element(in.begin(), in.end());
    double total = 0.0;
    for (double v : in) total += std::exp(v - mx);
    const double lse = mx + std::log(total);
    auto o = out.row(s);
    for (std::size_t k = 0; k < in.size(); ++k) o[k] = in[k] - lse;
  }
  return from_log_probs(std::move(out));
}

std::size_t required_frames(const LabelSequence& y) {
  std::size_t n = y.size();
  for (std::size_t i = 1; i < y.size(); ++i) {
    if (y[i] == y[i - 1]) ++n;
  }
  return n;
}

CtcResult ctc_loss(std::span<const double> lp, std::size_t S, std::size_t C, const LabelSequence& y) {
  if (lp.size() != S * C) throw InvalidShape("ctc_loss: grid size mismatch");
  check_labels(y, C);
  CtcResult result;
  result.occupancy = Tensor::zeros({std::max<std::size_t>(S, 1), C});
  if (S < required_frames(y)) {
    result.loss = std::numeric_limits<double>::infinity();
    result.feasible = false;
    return result;
  }
  if (y.empty()) {
    double total = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      total += lp[s * C + kBlank];
      result.occupancy.at(s, kBlank) = 1.0;
    }
    result.loss = -total;
    return result;
  }

  const std::size_t U = 2 * y.size() + 1;
  auto label = [&](std::size_t u) { return u % 2 == 0 ? kBlank : y[(u - 1) / 2]; };
  // skip transition u-2 -> u is allowed into a label that differs from the
  // previous label
  auto can_skip = [&](std::size_t u) { return u % 2 == 1 && u >= 2 && label(u) != label(u - 2); };
  auto emit = [&](std::size_t s, std::size_t u) {
    return lp[s * C + static_cast<std::size_t>(label(u))];
  };

  std::vector<double> alpha(S * U, kLogZero), beta(S * U, kLogZero);
  alpha[0] = emit(0, 0);
  alpha[1] = emit(0, 1);
  for (std::size_t s = 1; s < S; ++s) {
    const double* prev = &alpha[(s - 1) * U];
    double* cur = &alpha[s * U];
    for (std::size_t u = 0; u < U; ++u) {
      double acc = prev[u];
      if (u >= 1) acc = log_add(acc, prev[u - 1]);
      if (can_skip(u)) acc = log_add(acc, prev[u - 2]);
      cur[u] = log_mul(acc, emit(s, u));
    }
  }
  beta[(S - 1) * U + U - 1] = emit(S - 1, U - 1);
  beta[(S - 1) * U + U - 2] = emit(S - 1, U - 2);
  for (std::size_t s = S - 1; s-- > 0;) {
    const double* next = &beta[(s + 1) * U];
    double* cur = &beta[s * U];
    for (std::size_t u = 0; u < U; ++u) {
      double acc = next[u];
      if (u + 1 < U) acc = log_add(acc, next[u + 1]);
      if (u + 2 < U && can_skip(u + 2)) acc = log_add(acc, next[u + 2]);
      cur[u] = log_mul(acc, emit(s, u));
    }
  }

  const double log_total = log_add(alpha[(S - 1) * U + U - 1], alpha[(S - 1) * U + U - 2]);
  if (log_total <= kLogZero) {
    result.loss = std::numeric_limits<double>::infinity();
    result.feasible = false;
    return result;
  }
  result.loss = -log_total;
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t u = 0; u < U; ++u) {
      const double a = alpha[s * U + u], b = beta[s * U + u];
      if (a <= kLogZero || b <= kLogZero) continue;
      result.occupancy.at(s, static_cast<std::size_t>(label(u))) +=
          std::exp(a + b - emit(s, u) - log_total);
    }
  }
  return result;
}

CtcResult ctc_loss(const PosteriorGrid& grid, const LabelSequence& y) {
  return ctc_loss(grid.log_probs().values(), grid.frames(), grid.classes(), y);
}

Tensor ctc_logit_gradient(const PosteriorGrid& grid, const CtcResult& result) {
  Tensor g(grid.log_probs().shape());
  if (!result.feasible) return g;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g[i] = std::exp(grid.log_probs()[i]) - result.occupancy[i];
  }
  return g;
}

double ctc_brute_force(const PosteriorGrid& grid, const LabelSequence& y, std::size_t max_alignments) {
  const std::size_t S = grid.frames(), C = grid.classes();
  check_labels(y, C);
  double count = std::pow(static_cast<double>(C), static_cast<double>(S));
  if (count > static_cast<double>(max_alignments)) {
    throw ContractError("ctc_brute_force: " + std::to_string(C) + "^" + std::to_string(S) +
                        " alignments exceed the enumeration limit");
  }
  Alignment a(S, 0);
  double log_total = kLogZero;
  for (;;) {
    if (collapse(a) == y) {
      double lp = 0.0;
      for (std::size_t s = 0; s < S; ++s) lp += grid.log_prob(s, static_cast<std::size_t>(a[s]));
      log_total = log_add(log_total, lp);
    }
    std::size_t pos = 0;
    while (pos < S && ++a[pos] == static_cast<int>(C)) a[pos++] = 0;
    if (pos == S) break;
  }
  if (log_total <= kLogZero) return std::numeric_limits<double>::infinity();
  return -log_total;
}

LabelSequence collapse(const Alignment& a) {
  LabelSequence out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i > 0 && a[i] == a[i - 1]) continue;
    if (a[i] != kBlank) out.push_back(a[i]);
  }
  return out;
}

LabelSequence greedy_decode(std::span<const double> lp, std::size_t S, std::size_t C) {
  Alignment best(S);
  for (std::size_t s = 0; s < S; ++s) {
    std::size_t arg = 0;
    for (std::size_t k = 1; k < C; ++k) {
      if (lp[s * C + k] > lp[s * C + arg]) arg = k;
    }
    best[s] = static_cast<int>(arg);
  }
  return collapse(best);
}

LabelSequence greedy_decode(const PosteriorGrid& grid) {
  return greedy_decode(grid.log_probs().values(), grid.frames(), grid.classes());
}

Var ctc_loss(Var log_probs, const PadMask& mask, std::span<const LabelSequence> labels,
             std::span<const double> weights, std::vector<double>* losses) {
  mask.validate();
  const Tensor& lp = log_probs.value();
  if (lp.rank() != 2 || lp.rows() != mask.rows()) {
    throw InvalidShape("ctc_loss: grid " + shape_string(lp.shape()) + " does not match pad mask");
  }
  if (labels.size() != mask.batch() || weights.size() != mask.batch()) {
    throw InvalidShape("ctc_loss: labels/weights must have one entry per utterance");
  }
  const std::size_t C = lp.cols(), P = mask.padded_length;
  auto occupancy = std::make_shared<std::vector<Tensor>>(mask.batch());
  double total = 0.0;
  if (losses) losses->assign(mask.batch(), 0.0);
  for (std::size_t b = 0; b < mask.batch(); ++b) {
    const std::size_t len = mask.lengths[b];
    CtcResult r = ctc_loss(lp.values().subspan(b * P * C, len * C), len, C, labels[b]);
    if (losses) (*losses)[b] = r.loss;
    if (!r.feasible || weights[b] == 0.0) continue;
    total += weights[b] * r.loss;
    (*occupancy)[b] = std::move(r.occupancy);
  }
  std::vector<double> w(weights.begin(), weights.end());
  const std::size_t id = log_probs.id();
  return log_probs.graph().record(
      Tensor({1}, {total}), {log_probs}, [id, occupancy, w, P, C](Graph& g, std::size_t self) {
        Tensor* d = g.grad_buffer(id);
        const double up = g.upstream(self)[0];
        for (std::size_t b = 0; b < w.size(); ++b) {
          const Tensor& occ = (*occupancy)[b];
          if (occ.empty()) continue;
          double* dst = d->data() + b * P * C;
          for (std::size_t i = 0; i < occ.size(); ++i) dst[i] -= up * w[b] * occ[i];
        }
      });
}

}  // namespace sctc
