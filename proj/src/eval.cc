// src/eval.cc
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

#include "sctc/eval.h"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include "json.hpp"
#include <ostream>
#include <sstream>
#include <thread>

#include "sctc/error.h"

namespace sctc {
namespace {

using Clock = std::chrono::steady_clock;

std::string environment_note() {
  std::ostringstream os;
  os << "threads=1 hw_concurrency=" << std::thread::hardware_concurrency();
#if defined(__VERSION__)
  os << " compiler=\"" << __VERSION__ << "\"";
#endif
  return os.str();
}

}  // namespace

double ErrorCounts::rate() const {
  if (ref_length == 0) return errors() > 0 ? 1.0 : 0.0;
  return static_cast<double>(errors()) / static_cast<double>(ref_length);
}

ErrorCounts& ErrorCounts::operator+=(const ErrorCounts& o) {
  substitutions += o.substitutions;
  insertions += o.insertions;
  deletions += o.deletions;
  ref_length += o.ref_length;
  return *this;
}

std::vector<EditOp> edit_alignment(const LabelSequence& hyp, const LabelSequence& ref) {
  const std::size_t n = hyp.size(), m = ref.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      at(i, j) = std::min({at(i - 1, j - 1) + (hyp[i - 1] != ref[j - 1] ? 1u : 0u),
                           at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  std::vector<EditOp> ops;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = hyp[i - 1] == ref[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0u : 1u)) {
        ops.push_back(same ? EditOp::kMatch : EditOp::kSubstitution);
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ops.push_back(EditOp::kInsertion);
      --i;
    } else {
      ops.push_back(EditOp::kDeletion);
      --j;
    }
  }
  std::reverse(ops.begin(), ops.end());
  return ops;
}

ErrorCounts edit_distance(const LabelSequence& hyp, const LabelSequence& ref) {
  ErrorCounts c;
  c.ref_length = ref.size();
  for (EditOp op : edit_alignment(hyp, ref)) {
    switch (op) {
      case EditOp::kSubstitution: ++c.substitutions; break;
      case EditOp::kInsertion: ++c.insertions; break;
      case EditOp::kDeletion: ++c.deletions; break;
      case EditOp::kMatch: break;
    }
  }
  return c;
}

std::vector<LabelSequence> decode_utterances(const Model& model, const std::vector<Utterance>& utts,
                                             std::size_t threads) {
  std::vector<LabelSequence> out(utts.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < utts.size(); i += stride) {
      out[i] = greedy_decode(model.infer(utts[i].features));
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, utts.size()));
  if (threads == 1) {
    work(0, 1);
    return out;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  for (auto& th : pool) th.join();
  return out;
}

ScoreReport score_hypotheses(const std::vector<std::string>& ids, const std::vector<LabelSequence>& hyps,
                             const std::vector<LabelSequence>& refs) {
  if (ids.size() != hyps.size() || hyps.size() != refs.size()) {
    throw ContractError("score_hypotheses: ids, hyps and refs differ in length");
  }
  ScoreReport r;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    UtteranceScore u{ids[i], hyps[i], refs[i], edit_distance(hyps[i], refs[i])};
    r.total += u.counts;
    r.utterances.push_back(std::move(u));
  }
  return r;
}

ScoreReport score_dataset(const Model& model, const std::vector<Utterance>& utts, std::size_t threads) {
  std::vector<std::string> ids;
  std::vector<LabelSequence> refs;
  for (const auto& u : utts) {
    ids.push_back(u.id);
    refs.push_back(u.labels);
  }
  return score_hypotheses(ids, decode_utterances(model, utts, threads), refs);
}

std::string format_score_summary(const ScoreReport& report) {
  const auto& t = report.total;
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << "TER " << report.error_rate_percent() << "% [ "
     << t.errors() << " / " << t.ref_length << ", " << t.insertions << " ins, " << t.deletions
     << " del, " << t.substitutions << " sub ] over " << report.utterances.size() << " utterances";
  return os.str();
}

void write_score_records(std::ostream& os, const ScoreReport& report, const Vocabulary& vocab) {
  for (const auto& u : report.utterances) {
    nlohmann::ordered_json j;
    j["id"] = u.id;
    j["hyp"] = vocab.decode(u.hyp);
    j["ref"] = vocab.decode(u.ref);
    j["S"] = u.counts.substitutions;
    j["I"] = u.counts.insertions;
    j["D"] = u.counts.deletions;
    os << j.dump() << '\n';
  }
}

double LatencyReport::rtf() const {
  if (total_frames == 0) return 0.0;
  return total_seconds / (static_cast<double>(total_frames) * frame_period);
}

double LatencyReport::mean_seconds() const {
  return seconds.empty() ? 0.0 : total_seconds / static_cast<double>(seconds.size());
}

LatencyReport measure_latency(const Model& model, const std::vector<Utterance>& utts, double frame_period) {
  if (!(frame_period > 0.0)) throw InvalidConfig("frame period must be positive");
  LatencyReport r;
  r.frame_period = frame_period;
  r.environment = environment_note();
  if (utts.empty()) return r;
  greedy_decode(model.infer(utts.front().features));  // warm-up
  for (const auto& u : utts) {
    const auto start = Clock::now();
    const PosteriorGrid grid = model.infer(u.features, &r.stages);
    const auto mid = Clock::now();
    const LabelSequence hyp = greedy_decode(grid);
    const auto end = Clock::now();
    (void)hyp;
    const double secs = std::chrono::duration<double>(end - start).count();
    r.decode_seconds += std::chrono::duration<double>(end - mid).count();
    r.ids.push_back(u.id);
    r.seconds.push_back(secs);
    r.frames.push_back(u.features.rows());
    r.total_seconds += secs;
    r.total_frames += u.features.rows();
  }
  return r;
}

double speedup(const LatencyReport& baseline, const LatencyReport& candidate) {
  if (candidate.rtf() == 0.0) throw ContractError("speedup: candidate has no timings");
  return baseline.rtf() / candidate.rtf();
}

std::string format_latency(const LatencyReport& r, const std::string& label) {
  std::ostringstream os;
  os << std::setprecision(4) << label << ": utterances=" << r.seconds.size() << " frames=" << r.total_frames
     << " total=" << r.total_seconds << "s mean=" << r.mean_seconds() * 1e3 << "ms RTF=" << r.rtf()
     << " [embed " << r.stages.embed << "s, layers " << r.stages.layers << "s, conditioning "
     << r.stages.conditioning << "s, final head " << r.stages.final_head << "s, search "
     << r.decode_seconds << "s] (" << r.environment << ")";
  return os.str();
}

IntermediateReport dump_intermediate(const Model& model, const Utterance& utt) {
  if (model.config().mode == Mode::kPlainCtc) {
    throw ContractError("plain-ctc model has no intermediate predictions to inspect");
  }
  Graph g;
  const ForwardTrace trace = model.forward(g, utt.features, PadMask::single(utt.features.rows()));
  IntermediateReport r;
  r.id = utt.id;
  r.reference = utt.labels;
  auto add_layer = [&](std::size_t layer, Var grid) {
    const Tensor& lp = grid.value();
    LayerPrediction p;
    p.layer = layer;
    p.tokens = greedy_decode(lp.values(), lp.rows(), lp.cols());
    p.vs_reference = edit_distance(p.tokens, utt.labels);
    r.layers.push_back(std::move(p));
  };
  for (std::size_t i = 0; i < trace.intermediate.size(); ++i) add_layer(trace.layers[i], trace.intermediate[i]);
  add_layer(model.config().layers, trace.final);

  const Vocabulary& vocab = model.config().vocab;
  const LabelSequence& final_tokens = r.layers.back().tokens;
  std::ostringstream os;
  os << "utterance " << r.id << "\n";
  os << "  ref      : " << vocab.decode(r.reference) << "\n";
  for (const auto& p : r.layers) {
    os << "  layer " << std::setw(3) << p.layer << ": ";
    // bracket tokens that the final layer does not share at that position
    const auto ops = edit_alignment(p.tokens, final_tokens);
    std::size_t hi = 0;
    bool first = true;
    for (EditOp op : ops) {
      if (op == EditOp::kDeletion) continue;
      const std::string& sym = vocab.symbol(p.tokens[hi++]);
      os << (first ? "" : " ") << (op == EditOp::kMatch ? sym : "[" + sym + "]");
      first = false;
    }
    os << "   (errors " << p.vs_reference.errors() << "/" << p.vs_reference.ref_length << ")\n";
  }
  r.text = os.str();
  return r;
}

}  // namespace sctc
