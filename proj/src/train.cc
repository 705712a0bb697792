// src/train.cc
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

#include "sctc/train.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "sctc/error.h"
#include "sctc/eval.h"

namespace sctc {
namespace {

constexpr char kCkptMagic[4] = {'S', 'C', 'T', 'C'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
T parse_key(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw InvalidConfig("bad value for " + key + ": '" + text + "'");
  return value;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
void put_f64(std::string& out, double v) { out.append(reinterpret_cast<const char*>(&v), 8); }

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

  const char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError(origin_ + ": truncated checkpoint");
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4), 4);
    return v;
  }
  double f64() {
    double v;
    std::memcpy(&v, take(8), 8);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  const std::string& origin_;
  std::size_t pos_ = 0;
};

std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (epoch + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  return z ^ (z >> 27);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw InvalidConfig("train.epochs must be at least 1");
  if (batch_size == 0) throw InvalidConfig("train.batch_size must be at least 1");
  if (accum == 0) throw InvalidConfig("train.accum must be at least 1");
  if (warmup == 0) throw InvalidConfig("train.warmup must be at least 1");
  if (!(lr_factor > 0.0)) throw InvalidConfig("train.lr_factor must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidConfig("train.beta1/beta2 must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw InvalidConfig("train.adam_eps must be positive");
  if (!(clip_norm >= 0.0)) throw InvalidConfig("train.clip_norm must be non-negative");
  if (average_top == 0) throw InvalidConfig("train.average_top must be at least 1");
}

KeyValues TrainConfig::to_key_values() const {
  return {{"train.epochs", std::to_string(epochs)},
          {"train.batch_size", std::to_string(batch_size)},
          {"train.accum", std::to_string(accum)},
          {"train.lr_factor", format_double(lr_factor)},
          {"train.warmup", std::to_string(warmup)},
          {"train.beta1", format_double(beta1)},
          {"train.beta2", format_double(beta2)},
          {"train.adam_eps", format_double(adam_eps)},
          {"train.clip_norm", format_double(clip_norm)},
          {"train.average_top", std::to_string(average_top)},
          {"train.seed", std::to_string(seed)}};
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  for (const auto& [key, value] : kv) {
    if (key.rfind("train.", 0) != 0) continue;
    if (key == "train.epochs") c.epochs = parse_key<std::size_t>(key, value);
    else if (key == "train.batch_size") c.batch_size = parse_key<std::size_t>(key, value);
    else if (key == "train.accum") c.accum = parse_key<std::size_t>(key, value);
    else if (key == "train.lr_factor") c.lr_factor = parse_key<double>(key, value);
    else if (key == "train.warmup") c.warmup = parse_key<std::size_t>(key, value);
    else if (key == "train.beta1") c.beta1 = parse_key<double>(key, value);
    else if (key == "train.beta2") c.beta2 = parse_key<double>(key, value);
    else if (key == "train.adam_eps") c.adam_eps = parse_key<double>(key, value);
    else if (key == "train.clip_norm") c.clip_norm = parse_key<double>(key, value);
    else if (key == "train.average_top") c.average_top = parse_key<std::size_t>(key, value);
    else if (key == "train.seed") c.seed = parse_key<std::uint64_t>(key, value);
    else throw InvalidConfig("unknown config key: " + key);
  }
  return c;
}

double lr_schedule(std::size_t step, std::size_t warmup, std::size_t dim, double factor) {
  if (step == 0) throw ContractError("lr_schedule: step starts at 1");
  if (warmup == 0 || dim == 0) throw InvalidConfig("lr_schedule: warmup and dim must be positive");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return factor / std::sqrt(static_cast<double>(dim)) * std::min(1.0 / std::sqrt(s), s / (w * std::sqrt(w)));
}

OptimizerState make_optimizer(const ParameterStore& params, double beta1, double beta2, double eps) {
  OptimizerState st;
  st.beta1 = beta1;
  st.beta2 = beta2;
  st.eps = eps;
  for (const auto& p : params) {
    st.first_moment.push_back(Tensor::zeros(p.value.shape()));
    st.second_moment.push_back(Tensor::zeros(p.value.shape()));
  }
  return st;
}

void optimizer_step(ParameterStore& params, OptimizerState& state, double lr) {
  if (state.first_moment.size() != params.size()) throw ContractError("optimizer state does not match parameters");
  for (const auto& p : params) {
    if (!p.grad.all_finite()) throw NumericError("non-finite gradient in parameter " + p.name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  std::size_t i = 0;
  for (auto& p : params) {
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    ++i;
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double g = p.grad[k];
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g;
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g * g;
      p.value[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.eps);
    }
  }
}

double clip_gradients(ParameterStore& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad.values()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& p : params) {
      for (double& g : p.grad.values()) g *= s;
    }
  }
  return norm;
}

StepRecord accumulate_batch(Model& model, const Batch& batch, double weight) {
  StepRecord rec;
  std::vector<double> weights(batch.labels.size(), 0.0);
  std::size_t feasible = 0;
  for (std::size_t b = 0; b < batch.labels.size(); ++b) {
    if (batch.mask.lengths[b] >= required_frames(batch.labels[b])) ++feasible;
  }
  rec.infeasible = batch.labels.size() - feasible;
  if (feasible == 0) return rec;
  for (std::size_t b = 0; b < batch.labels.size(); ++b) {
    if (batch.mask.lengths[b] >= required_frames(batch.labels[b])) weights[b] = weight / static_cast<double>(feasible);
  }
  Graph g;
  const ForwardTrace trace = model.forward(g, batch.features, batch.mask);
  const LossTerms terms = total_loss(trace, batch.mask, batch.labels, weights, model.config().lambda);
  g.backward(terms.total);
  rec.total = terms.total.value().item() / weight;
  rec.final_ctc = terms.final.value().item() / weight;
  for (Var v : terms.intermediate) rec.intermediate.push_back(v.value().item() / weight);
  return rec;
}

EpochMetrics train_epoch(Model& model, std::span<const Batch> batches, std::size_t accum_n,
                         const TrainConfig& cfg, OptimizerState& state, const StepCallback& on_step) {
  if (accum_n == 0) throw InvalidConfig("accumulation count must be at least 1");
  EpochMetrics metrics;
  std::size_t contributing = 0;
  for (std::size_t start = 0; start < batches.size(); start += accum_n) {
    const std::size_t end = std::min(batches.size(), start + accum_n);
    const double weight = 1.0 / static_cast<double>(end - start);
    model.params().zero_grad();
    StepRecord step;
    std::size_t used = 0;
    for (std::size_t i = start; i < end; ++i) {
      StepRecord r = accumulate_batch(model, batches[i], weight);
      metrics.infeasible += r.infeasible;
      step.infeasible += r.infeasible;
      if (r.infeasible == batches[i].labels.size()) {
        ++metrics.skipped_batches;
        continue;
      }
      ++used;
      step.total += r.total;
      step.final_ctc += r.final_ctc;
      if (step.intermediate.empty()) step.intermediate.assign(r.intermediate.size(), 0.0);
      for (std::size_t k = 0; k < r.intermediate.size(); ++k) step.intermediate[k] += r.intermediate[k];
    }
    if (used == 0) continue;
    if (cfg.clip_norm > 0.0) clip_gradients(model.params(), cfg.clip_norm);
    step.lr = lr_schedule(state.step + 1, cfg.warmup, model.config().dim, cfg.lr_factor);
    optimizer_step(model.params(), state, step.lr);
    step.step = state.step;
    step.total /= static_cast<double>(used);
    step.final_ctc /= static_cast<double>(used);
    for (double& v : step.intermediate) v /= static_cast<double>(used);

    ++metrics.steps;
    contributing += used;
    metrics.total += step.total * static_cast<double>(used);
    metrics.final_ctc += step.final_ctc * static_cast<double>(used);
    if (metrics.intermediate.empty()) metrics.intermediate.assign(step.intermediate.size(), 0.0);
    for (std::size_t k = 0; k < step.intermediate.size(); ++k) {
      metrics.intermediate[k] += step.intermediate[k] * static_cast<double>(used);
    }
    if (on_step) on_step(step);
  }
  if (contributing > 0) {
    metrics.total /= static_cast<double>(contributing);
    metrics.final_ctc /= static_cast<double>(contributing);
    for (double& v : metrics.intermediate) v /= static_cast<double>(contributing);
  }
  return metrics;
}

Checkpoint make_checkpoint(const Model& model, const KeyValues& run_config, double metric, std::size_t epoch) {
  Checkpoint c;
  for (const auto& p : model.params()) c.params.emplace_back(p.name, p.value);
  c.config = run_config;
  for (const auto& [k, v] : model.config().to_key_values()) c.config[k] = v;
  c.metric = metric;
  c.epoch = epoch;
  return c;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCkptMagic, 4);
  put_u32(out, kCkptVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.values()) put_f64(out, v);
  }
  std::string block;
  KeyValues config = ckpt.config;
  config["checkpoint.epoch"] = std::to_string(ckpt.epoch);
  for (const auto& [k, v] : config) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw FormatError("config entry cannot be serialized: " + k);
    }
    block += k + "=" + v + "\n";
  }
  put_u32(out, static_cast<std::uint32_t>(block.size()));
  out += block;
  put_f64(out, ckpt.metric);
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes, const std::string& origin) {
  Reader r(bytes, origin);
  if (std::memcmp(r.take(4), kCkptMagic, 4) != 0) throw FormatError(origin + ": not an SCTC checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCkptVersion) throw FormatError(origin + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = r.u32();
    std::string name(r.take(len), len);
    const std::uint32_t rank = r.u32();
    if (rank == 0) throw FormatError(origin + ": parameter " + name + " has rank 0");
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u32());
    std::size_t n = 0;
    try {
      n = shape_size(shape);
    } catch (const InvalidShape&) {
      throw FormatError(origin + ": parameter " + name + " has an empty dimension");
    }
    std::vector<double> values(n);
    std::memcpy(values.data(), r.take(n * 8), n * 8);
    c.params.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  const std::uint32_t block_len = r.u32();
  std::istringstream block(std::string(r.take(block_len), block_len));
  for (std::string line; std::getline(block, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(origin + ": malformed config line '" + line + "'");
    c.config[line.substr(0, eq)] = line.substr(eq + 1);
  }
  c.metric = r.f64();
  if (!r.done()) throw FormatError(origin + ": trailing bytes after checkpoint");
  if (auto it = c.config.find("checkpoint.epoch"); it != c.config.end()) {
    c.epoch = parse_key<std::size_t>(it->first, it->second);
    c.config.erase(it);
  }
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return deserialize_checkpoint(ss.str(), path.string());
}

std::vector<std::size_t> select_top(std::span<const Checkpoint> checkpoints, std::size_t top_n) {
  if (checkpoints.empty()) throw ContractError("no checkpoints to select from");
  if (top_n == 0 || top_n > checkpoints.size()) {
    throw ContractError("cannot select top " + std::to_string(top_n) + " of " +
                        std::to_string(checkpoints.size()) + " checkpoints");
  }
  std::vector<std::size_t> idx(checkpoints.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (checkpoints[a].metric != checkpoints[b].metric) return checkpoints[a].metric < checkpoints[b].metric;
    return checkpoints[a].epoch > checkpoints[b].epoch;
  });
  idx.resize(top_n);
  return idx;
}

std::vector<std::pair<std::string, Tensor>> average_checkpoints(std::span<const Checkpoint> checkpoints,
                                                                std::size_t top_n) {
  const auto chosen = select_top(checkpoints, top_n);
  auto avg = checkpoints[chosen.front()].params;
  for (std::size_t n = 1; n < chosen.size(); ++n) {
    const auto& other = checkpoints[chosen[n]].params;
    if (other.size() != avg.size()) throw FormatError("checkpoints hold different parameter sets");
    const double inv = 1.0 / static_cast<double>(n + 1);
    for (std::size_t i = 0; i < avg.size(); ++i) {
      if (other[i].first != avg[i].first || other[i].second.shape() != avg[i].second.shape()) {
        throw FormatError("checkpoint parameter mismatch at " + avg[i].first);
      }
      Tensor& mean = avg[i].second;
      const Tensor& x = other[i].second;
      // running mean keeps identical inputs bitwise unchanged
      for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += (x[k] - mean[k]) * inv;
    }
  }
  return avg;
}

Model load_model(const Checkpoint& ckpt) {
  Model model(ModelConfig::from_key_values(ckpt.config));
  model.load(ckpt.params);
  return model;
}

Model load_model(const std::filesystem::path& path) { return load_model(read_checkpoint(path)); }

TrainResult run_training(const TrainRun& run, Model& model, const std::vector<Utterance>& train,
                         const std::vector<Utterance>& dev) {
  run.train.validate();
  const TrainConfig& cfg = run.train;
  KeyValues config = run.extra;
  for (const auto& [k, v] : run.train.to_key_values()) config[k] = v;

  std::ofstream metrics_log;
  if (!run.out_dir.empty()) {
    std::filesystem::create_directories(run.out_dir);
    metrics_log.open(run.out_dir / "metrics.jsonl", std::ios::binary);
    if (!metrics_log) throw IoError("cannot write " + (run.out_dir / "metrics.jsonl").string());
  }
  const auto& layers = model.selected_layers();
  auto on_step = [&](const StepRecord& s) {
    if (!metrics_log.is_open()) return;
    nlohmann::ordered_json j;
    j["step"] = s.step;
    j["lr"] = s.lr;
    j["total"] = s.total;
    j["final_ctc"] = s.final_ctc;
    nlohmann::ordered_json inter = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < s.intermediate.size() && k < layers.size(); ++k) {
      inter["layer" + std::to_string(layers[k])] = s.intermediate[k];
    }
    j["inter"] = inter;
    j["infeasible"] = s.infeasible;
    metrics_log << j.dump() << '\n';
  };

  OptimizerState state = make_optimizer(model.params(), cfg.beta1, cfg.beta2, cfg.adam_eps);
  std::vector<Checkpoint> checkpoints;
  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = make_batches(train, cfg.batch_size, epoch_seed(cfg.seed, epoch));
    EpochSummary summary;
    summary.epoch = epoch;
    summary.train = train_epoch(model, batches, cfg.accum, cfg, state, on_step);
    summary.dev_error = dev.empty() ? 0.0 : score_dataset(model, dev).error_rate_percent();
    checkpoints.push_back(make_checkpoint(model, config, summary.dev_error, epoch));
    if (!run.out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch%03zu.sctc", epoch);
      write_checkpoint(run.out_dir / name, checkpoints.back());
      nlohmann::ordered_json j;
      j["epoch"] = epoch;
      j["train_total"] = summary.train.total;
      j["train_final_ctc"] = summary.train.final_ctc;
      j["dev_ter"] = summary.dev_error;
      j["infeasible"] = summary.train.infeasible;
      j["skipped_batches"] = summary.train.skipped_batches;
      metrics_log << j.dump() << '\n';
    }
    if (run.log) {
      *run.log << "epoch " << epoch << " loss " << summary.train.total << " final " << summary.train.final_ctc
               << " dev TER " << summary.dev_error << "%";
      if (summary.train.infeasible > 0) *run.log << " (infeasible " << summary.train.infeasible << ")";
      *run.log << std::endl;
    }
    result.epochs.push_back(std::move(summary));
  }

  result.averaged = average_checkpoints(checkpoints, std::min(cfg.average_top, checkpoints.size()));
  model.load(result.averaged);
  result.final_dev_error = dev.empty() ? 0.0 : score_dataset(model, dev).error_rate_percent();
  if (!run.out_dir.empty()) {
    write_checkpoint(run.out_dir / "model.sctc", make_checkpoint(model, config, result.final_dev_error, cfg.epochs));
    nlohmann::ordered_json j;
    j["averaged_top"] = std::min(cfg.average_top, checkpoints.size());
    j["final_dev_ter"] = result.final_dev_error;
    metrics_log << j.dump() << '\n';
  }
  if (run.log) *run.log << "averaged model dev TER " << result.final_dev_error << "%" << std::endl;
  return result;
}

}  // namespace sctc
