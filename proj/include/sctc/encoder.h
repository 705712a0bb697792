// sctc/encoder.h
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
#include <string>

#include "sctc/autograd.h"

namespace sctc {

enum class Activation { kRelu, kGelu };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

struct LinearParams {
  Parameter* weight = nullptr;  // [in, out]
  Parameter* bias = nullptr;    // [out]
};

struct NormParams {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
};

// One pre-norm Transformer encoder layer. Attention projections carry no
// bias; heads partition the model dimension evenly.
struct EncoderLayerParams {
  NormParams attn_norm;
  Parameter* w_q = nullptr;
  Parameter* w_k = nullptr;
  Parameter* w_v = nullptr;
  Parameter* w_o = nullptr;
  NormParams ffn_norm;
  LinearParams ffn_in;
  LinearParams ffn_out;
};

struct EncoderOptions {
  std::size_t heads = 4;
  Activation activation = Activation::kRelu;
};

inline constexpr double kNormEps = 1e-5;

// Deterministic per-parameter seed from a model seed and the parameter path.
std::uint64_t parameter_seed(std::uint64_t base, const std::string& name);

LinearParams make_linear(ParameterStore& store, const std::string& prefix, std::size_t in,
                         std::size_t out, std::uint64_t seed);
NormParams make_norm(ParameterStore& store, const std::string& prefix, std::size_t dim);
EncoderLayerParams make_encoder_layer(ParameterStore& store, const std::string& prefix,
                                      std::size_t dim, std::size_t ff_dim, std::uint64_t seed);

// pe[s, 2i] = sin(s / 10000^(2i/D)), pe[s, 2i+1] = cos(same).
Tensor positional_encoding(std::size_t frames, std::size_t dim);
// Encoding tiled over a padded batch: row b * P + s gets pe[s].
Tensor positional_rows(const PadMask& mask, std::size_t dim);

Var linear(Var x, const LinearParams& p);
Var norm(Var x, const NormParams& p);

// features [B * P, D_feat] -> projection to D plus positional encoding.
Var embed_input(Var features, const LinearParams& proj, const PadMask& mask);
// X + W_o * MHA(norm(X)).
Var self_attention(Var x, const EncoderLayerParams& p, std::size_t heads, const PadMask& mask);
// X + FFN(norm(X)), position-wise.
Var ffn(Var x, const EncoderLayerParams& p, Activation activation);
Var encoder_layer(Var x, const EncoderLayerParams& p, const EncoderOptions& opts, const PadMask& mask);

}  // namespace sctc
