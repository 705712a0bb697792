// sctc/eval.h
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
#include <iosfwd>
#include <string>
#include <vector>

#include "sctc/ctc.h"
#include "sctc/data.h"
#include "sctc/model.h"

namespace sctc {

struct ErrorCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t ref_length = 0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
  // (S + I + D) / N; zero-length references with errors count as 1.
  double rate() const;
  ErrorCounts& operator+=(const ErrorCounts& o);
  friend bool operator==(const ErrorCounts&, const ErrorCounts&) = default;
};

enum class EditOp { kMatch, kSubstitution, kInsertion, kDeletion };

// Unit-cost Levenshtein alignment. On equal cost the backtrace prefers
// substitution (or match), then insertion, then deletion.
std::vector<EditOp> edit_alignment(const LabelSequence& hyp, const LabelSequence& ref);
ErrorCounts edit_distance(const LabelSequence& hyp, const LabelSequence& ref);

struct UtteranceScore {
  std::string id;
  LabelSequence hyp;
  LabelSequence ref;
  ErrorCounts counts;
};

struct ScoreReport {
  ErrorCounts total;
  std::vector<UtteranceScore> utterances;  // in input order

  // Aggregate over summed counts, in percent.
  double error_rate_percent() const { return 100.0 * total.rate(); }
};

// Greedy decoding with the final grid. Runs on `threads` workers; results do
// not depend on the worker count.
std::vector<LabelSequence> decode_utterances(const Model& model, const std::vector<Utterance>& utts,
                                             std::size_t threads = 1);
ScoreReport score_hypotheses(const std::vector<std::string>& ids, const std::vector<LabelSequence>& hyps,
                             const std::vector<LabelSequence>& refs);
ScoreReport score_dataset(const Model& model, const std::vector<Utterance>& utts, std::size_t threads = 1);

std::string format_score_summary(const ScoreReport& report);
// One JSON object per line: id, hyp, ref, S, I, D.
void write_score_records(std::ostream& os, const ScoreReport& report, const Vocabulary& vocab);

struct LatencyReport {
  std::vector<std::string> ids;
  std::vector<double> seconds;       // decode wall time per utterance
  std::vector<std::size_t> frames;
  double frame_period = 0.01;
  double total_seconds = 0.0;
  std::size_t total_frames = 0;
  StageTimes stages;
  double decode_seconds = 0.0;       // greedy search share of total
  std::string environment;

  // total decode time / (total frames * frame period)
  double rtf() const;
  double mean_seconds() const;
};

// Batch-size-1 sequential decoding after one untimed warm-up pass.
LatencyReport measure_latency(const Model& model, const std::vector<Utterance>& utts,
                              double frame_period = 0.01);
// How many times faster `candidate` decodes than `baseline`.
double speedup(const LatencyReport& baseline, const LatencyReport& candidate);
std::string format_latency(const LatencyReport& report, const std::string& label);

struct LayerPrediction {
  std::size_t layer = 0;  // 1-based; the last entry is layer L
  LabelSequence tokens;
  ErrorCounts vs_reference;
};

struct IntermediateReport {
  std::string id;
  LabelSequence reference;
  std::vector<LayerPrediction> layers;
  std::string text;  // aligned listing; [x] marks tokens differing from layer L
};

// Throws ContractError for plain-ctc models, which have no intermediate grids.
IntermediateReport dump_intermediate(const Model& model, const Utterance& utt);

}  // namespace sctc
