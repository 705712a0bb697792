// src/encoder.cc
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

#include "sctc/encoder.h"

#include <cmath>

#include "sctc/error.h"
#include "sctc/ops.h"

namespace sctc {

std::string to_string(Activation a) { return a == Activation::kGelu ? "gelu" : "relu"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::kRelu;
  if (s == "gelu") return Activation::kGelu;
  throw InvalidConfig("unknown activation '" + s + "' (expected relu or gelu)");
}

std::uint64_t parameter_seed(std::uint64_t base, const std::string& name) {
  // FNV-1a over the name, mixed with the base seed
  std::uint64_t h = 1469598103934665603ull ^ (base * 0x9E3779B97F4A7C15ull);
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

LinearParams make_linear(ParameterStore& store, const std::string& prefix, std::size_t in,
                         std::size_t out, std::uint64_t seed) {
  LinearParams p;
  const std::string w = prefix + ".weight";
  p.weight = &store.add(w, Tensor::scaled_normal({in, out}, parameter_seed(seed, w)));
  p.bias = &store.add(prefix + ".bias", Tensor::zeros({out}));
  return p;
}

NormParams make_norm(ParameterStore& store, const std::string& prefix, std::size_t dim) {
  return {&store.add(prefix + ".gamma", Tensor::constant({dim}, 1.0)),
          &store.add(prefix + ".beta", Tensor::zeros({dim}))};
}

EncoderLayerParams make_encoder_layer(ParameterStore& store, const std::string& prefix,
                                      std::size_t dim, std::size_t ff_dim, std::uint64_t seed) {
  EncoderLayerParams p;
  auto proj = [&](const char* name) {
    const std::string full = prefix + "." + name;
    return &store.add(full, Tensor::scaled_normal({dim, dim}, parameter_seed(seed, full)));
  };
  p.attn_norm = make_norm(store, prefix + ".attn_norm", dim);
  p.w_q = proj("w_q");
  p.w_k = proj("w_k");
  p.w_v = proj("w_v");
  p.w_o = proj("w_o");
  p.ffn_norm = make_norm(store, prefix + ".ffn_norm", dim);
  p.ffn_in = make_linear(store, prefix + ".ffn_in", dim, ff_dim, seed);
  p.ffn_out = make_linear(store, prefix + ".ffn_out", ff_dim, dim, seed);
  return p;
}

Tensor positional_encoding(std::size_t frames, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) {
    throw InvalidConfig("positional encoding needs an even dimension, got " + std::to_string(dim));
  }
  Tensor pe({frames, dim});
  for (std::size_t s = 0; s < frames; ++s) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double angle =
          static_cast<double>(s) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
      pe.at(s, i) = std::sin(angle);
      pe.at(s, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Tensor positional_rows(const PadMask& mask, std::size_t dim) {
  const Tensor pe = positional_encoding(mask.padded_length, dim);
  Tensor out({mask.rows(), dim});
  for (std::size_t b = 0; b < mask.batch(); ++b) {
    std::copy(pe.values().begin(), pe.values().end(),
              out.values().begin() + static_cast<std::ptrdiff_t>(b * pe.size()));
  }
  return out;
}

Var linear(Var x, const LinearParams& p) {
  Graph& g = x.graph();
  return add_bias(matmul(x, g.param(*p.weight)), g.param(*p.bias));
}

Var norm(Var x, const NormParams& p) {
  Graph& g = x.graph();
  return layer_norm(x, g.param(*p.gamma), g.param(*p.beta), kNormEps);
}

Var embed_input(Var features, const LinearParams& proj, const PadMask& mask) {
  if (features.value().rows() != mask.rows()) {
    throw InvalidShape("embed_input: feature rows do not match pad mask");
  }
  Var projected = linear(features, proj);
  Var pe = features.graph().constant(positional_rows(mask, projected.value().cols()));
  return add(projected, pe);
}

Var self_attention(Var x, const EncoderLayerParams& p, std::size_t heads, const PadMask& mask) {
  Graph& g = x.graph();
  Var h = norm(x, p.attn_norm);
  Var ctx = attention(matmul(h, g.param(*p.w_q)), matmul(h, g.param(*p.w_k)),
                      matmul(h, g.param(*p.w_v)), heads, mask);
  return add(matmul(ctx, g.param(*p.w_o)), x);
}

Var ffn(Var x, const EncoderLayerParams& p, Activation activation) {
  Var h = linear(norm(x, p.ffn_norm), p.ffn_in);
  h = activation == Activation::kGelu ? gelu(h) : relu(h);
  return add(linear(h, p.ffn_out), x);
}

Var encoder_layer(Var x, const EncoderLayerParams& p, const EncoderOptions& opts, const PadMask& mask) {
  return ffn(self_attention(x, p, opts.heads, mask), p, opts.activation);
}

}  // namespace sctc
