// src/cli.cc
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

#include "sctc/cli.h"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "sctc/config.h"
#include "sctc/data.h"
#include "sctc/error.h"
#include "sctc/eval.h"
#include "sctc/train.h"

namespace sctc {
namespace {

namespace fs = std::filesystem;

// Usage problems that CLI11 cannot see (flag combinations and the like).
class UsageError : public Error {
 public:
  using Error::Error;
};

fs::path require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " not found: " + path);
  return path;
}

fs::path require_dir(const std::string& path, const char* what) {
  if (!fs::is_directory(path)) throw IoError(std::string(what) + " not found: " + path);
  return path;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os || !(os << text)) throw IoError("cannot write " + path.string());
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir, std::ostream& out) {
  const SyntheticTaskSpec spec = parse_data_spec(read_key_values(require_file(spec_path, "spec file")));
  const Dataset data = generate_synthetic(spec);
  save_dataset(out_dir, data, spec);
  out << "wrote " << data.train.size() << "/" << data.dev.size() << "/" << data.test.size()
      << " train/dev/test utterances to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_override, const std::string& out_dir,
              std::ostream& out) {
  KeyValues kv = read_key_values(require_file(config_path, "config file"));
  if (!data_override.empty()) kv["data_dir"] = data_override;
  auto data_it = kv.find("data_dir");
  if (data_it == kv.end() || data_it->second.empty()) throw InvalidConfig("config does not set data_dir");
  const fs::path data_dir = require_dir(data_it->second, "dataset directory");
  const Vocabulary vocab = read_vocabulary(data_dir);
  auto train = load_split(data_dir, "train", vocab);
  auto dev = load_split(data_dir, "dev", vocab);
  if (train.empty()) throw InvalidConfig("training split is empty");
  const RunConfig rc = RunConfig::from_key_values(kv, vocab, train.front().features.cols());

  fs::create_directories(out_dir);
  {
    std::ostringstream os;
    write_key_values(os, rc.to_key_values());
    write_text(fs::path(out_dir) / "config.txt", os.str());
  }
  Model model(rc.model);
  TrainRun run{rc.model, rc.train, {{"data_dir", rc.data_dir}}, out_dir, &out};
  const TrainResult result = run_training(run, model, train, dev);
  out << "final model " << (fs::path(out_dir) / "model.sctc").string() << " dev TER " << result.final_dev_error
      << "%\n";
  return 0;
}

int cmd_decode(const std::string& model_path, const std::string& data_dir, const std::string& split,
               const std::string& out_dir, std::ostream& out) {
  const Model model = load_model(require_file(model_path, "model"));
  const auto utts = load_split(require_dir(data_dir, "dataset directory"), split, model.config().vocab);
  const auto hyps = decode_utterances(model, utts, configured_threads());
  std::ostringstream os;
  for (std::size_t i = 0; i < utts.size(); ++i) {
    os << utts[i].id << '\t' << model.config().vocab.decode(hyps[i]) << '\n';
  }
  if (out_dir.empty()) {
    out << os.str();
  } else {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / (split + ".hyp"), os.str());
    out << "wrote " << utts.size() << " hypotheses to " << (fs::path(out_dir) / (split + ".hyp")).string() << "\n";
  }
  return 0;
}

int cmd_score(const std::string& hyp_path, const std::string& ref_path, const std::string& out_dir,
              std::ostream& out) {
  const auto refs = read_manifest(require_file(ref_path, "reference manifest"));
  std::map<std::string, std::string> hyp_text;
  {
    std::ifstream is(require_file(hyp_path, "hypothesis file"));
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
      ++n;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos) throw FormatError(hyp_path + ":" + std::to_string(n) + ": expected <id>\\t<tokens>");
      if (!hyp_text.emplace(line.substr(0, tab), line.substr(tab + 1)).second) {
        throw FormatError(hyp_path + ":" + std::to_string(n) + ": duplicate id " + line.substr(0, tab));
      }
    }
  }
  // symbols only need a consistent integer mapping for scoring
  std::vector<std::string> symbols;
  std::map<std::string, int> index;
  auto encode = [&](const std::vector<std::string>& toks) {
    LabelSequence ids;
    for (const auto& t : toks) {
      auto [it, fresh] = index.emplace(t, static_cast<int>(symbols.size()) + 1);
      if (fresh) symbols.push_back(t);
      ids.push_back(it->second);
    }
    return ids;
  };
  std::vector<std::string> ids;
  std::vector<LabelSequence> hyps, ref_ids;
  for (const auto& e : refs) {
    auto it = hyp_text.find(e.id);
    if (it == hyp_text.end()) throw FormatError("no hypothesis for utterance " + e.id);
    std::istringstream is(it->second);
    std::vector<std::string> toks;
    for (std::string t; is >> t;) toks.push_back(t);
    ids.push_back(e.id);
    ref_ids.push_back(encode(e.tokens));
    hyps.push_back(encode(toks));
    hyp_text.erase(it);
  }
  if (!hyp_text.empty()) throw FormatError("hypothesis for unknown utterance " + hyp_text.begin()->first);
  const ScoreReport report = score_hypotheses(ids, hyps, ref_ids);
  const Vocabulary vocab(symbols);
  out << format_score_summary(report) << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "score.txt", format_score_summary(report) + "\n");
    std::ofstream os(fs::path(out_dir) / "score.jsonl", std::ios::binary);
    write_score_records(os, report, vocab);
    if (!os) throw IoError("cannot write " + (fs::path(out_dir) / "score.jsonl").string());
  } else {
    write_score_records(out, report, vocab);
  }
  return 0;
}

int cmd_latency(const std::string& model_path, const std::string& baseline_path, const std::string& data_dir,
                const std::string& split, double frame_period, std::size_t limit, std::ostream& out) {
  const Model model = load_model(require_file(model_path, "model"));
  auto utts = load_split(require_dir(data_dir, "dataset directory"), split, model.config().vocab);
  if (limit > 0 && utts.size() > limit) utts.resize(limit);
  if (baseline_path.empty()) {
    out << format_latency(measure_latency(model, utts, frame_period), to_string(model.config().mode)) << "\n";
    return 0;
  }
  const Model baseline = load_model(require_file(baseline_path, "baseline model"));
  const LatencyReport base = measure_latency(baseline, utts, frame_period);
  const LatencyReport cand = measure_latency(model, utts, frame_period);
  out << format_latency(base, "baseline " + to_string(baseline.config().mode)) << "\n";
  out << format_latency(cand, "model " + to_string(model.config().mode)) << "\n";
  out << "speedup " << speedup(base, cand) << "x, overhead ratio " << cand.total_seconds / base.total_seconds
      << "\n";
  return 0;
}

int cmd_inspect(const std::string& model_path, const std::string& utt_id, std::string data_dir,
                std::ostream& out) {
  const Checkpoint ckpt = read_checkpoint(require_file(model_path, "model"));
  const Model model = load_model(ckpt);
  if (model.config().mode == Mode::kPlainCtc) {
    throw UsageError("model was trained in plain-ctc mode and has no intermediate predictions");
  }
  if (data_dir.empty()) {
    auto it = ckpt.config.find("data_dir");
    if (it == ckpt.config.end() || it->second.empty()) throw UsageError("model does not record its dataset; pass --data");
    data_dir = it->second;
  }
  require_dir(data_dir, "dataset directory");
  for (const char* split : {"train", "dev", "test"}) {
    for (const auto& e : read_manifest(fs::path(data_dir) / (std::string(split) + ".tsv"))) {
      if (e.id != utt_id) continue;
      Utterance u{e.id, read_features(fs::path(data_dir) / e.feature_path), {}};
      for (const auto& t : e.tokens) u.labels.push_back(model.config().vocab.id(t));
      out << dump_intermediate(model, u).text;
      return 0;
    }
  }
  throw IoError("utterance " + utt_id + " not found in " + data_dir);
}

int cmd_defaults(std::ostream& out) {
  out << "# training run config (sctc train --config)\n";
  for (const auto& d : run_config_keys()) out << d.key << " = " << d.default_value << "   # " << d.help << "\n";
  out << "\n# synthetic data spec (sctc gen-data --spec)\n";
  for (const auto& d : data_spec_keys()) out << d.key << " = " << d.default_value << "   # " << d.help << "\n";
  return 0;
}

}  // namespace

std::size_t configured_threads() {
  const char* env = std::getenv("SCTC_THREADS");
  if (env == nullptr) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (end == env || *end != '\0' || v < 1) return 1;
  return static_cast<std::size_t>(v);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"self-conditioned CTC: data generation, training, decoding and scoring"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::string spec, out_dir, config, data, model, split = "test", hyp, ref, utt, baseline;
  double frame_period = 0.01;
  std::size_t limit = 0;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--spec", spec, "data spec file (key = value)")->required();
  gen->add_option("--out", out_dir, "output dataset directory")->required();

  auto* train = app.add_subcommand("train", "train a model and average its best checkpoints");
  train->add_option("--config", config, "run config file (key = value)")->required();
  train->add_option("--out", out_dir, "run directory")->required();
  train->add_option("--data", data, "dataset directory, overrides data_dir");

  auto* decode = app.add_subcommand("decode", "greedy-decode one split");
  decode->add_option("--model", model, "model checkpoint")->required();
  decode->add_option("--data", data, "dataset directory")->required();
  decode->add_option("--split", split, "train, dev or test")->required();
  decode->add_option("--out", out_dir, "write <split>.hyp here instead of stdout");

  auto* score = app.add_subcommand("score", "token error rate of hypotheses against a manifest");
  score->add_option("--hyp", hyp, "hypothesis file (<id>\\t<tokens>)")->required();
  score->add_option("--ref", ref, "reference manifest")->required();
  score->add_option("--out", out_dir, "write score.txt and score.jsonl here");

  auto* latency = app.add_subcommand("latency", "batch-size-1 decoding time");
  latency->add_option("--model", model, "model checkpoint")->required();
  latency->add_option("--data", data, "dataset directory")->required();
  latency->add_option("--split", split, "split to decode");
  latency->add_option("--baseline", baseline, "second model to compare against");
  latency->add_option("--frame-period", frame_period, "seconds per frame for the real-time ratio");
  latency->add_option("--limit", limit, "decode at most this many utterances");

  auto* inspect = app.add_subcommand("inspect", "per-layer greedy outputs for one utterance");
  inspect->add_option("--model", model, "model checkpoint")->required();
  inspect->add_option("--utt", utt, "utterance id")->required();
  inspect->add_option("--data", data, "dataset directory (defaults to the model's)");

  app.add_subcommand("defaults", "print every config key with its default");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "sctc: usage error: " << e.what() << "\n";
    return 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "gen-data") return cmd_gen_data(spec, out_dir, out);
    if (cmd == "train") return cmd_train(config, data, out_dir, out);
    if (cmd == "decode") return cmd_decode(model, data, split, out_dir, out);
    if (cmd == "score") return cmd_score(hyp, ref, out_dir, out);
    if (cmd == "latency") return cmd_latency(model, baseline, data, split, frame_period, limit, out);
    if (cmd == "inspect") return cmd_inspect(model, utt, data, out);
    return cmd_defaults(out);
  } catch (const UsageError& e) {
    err << "sctc " << cmd << ": error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "sctc " << cmd << ": error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace sctc
