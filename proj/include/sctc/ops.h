// sctc/ops.h
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

#include <optional>

#include "sctc/autograd.h"

namespace sctc {

// Differentiable operations on graph nodes. Binary ops need equal shapes;
// the only broadcast is add_bias, which adds a [C] vector to every row.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var relu(Var a);
Var gelu(Var a);
Var exp(Var a);
Var add_bias(Var x, Var bias);
Var sum(Var a);

enum class Elementwise { kAdd, kSub, kMul, kRelu, kGelu, kScale };
Var elementwise(Elementwise kind, Var a, std::optional<Var> b = std::nullopt, double c = 1.0);

// Row-wise normalisation over the last dimension followed by gamma * x + beta.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

// Row-wise log-softmax over the last dimension.
Var log_softmax(Var x);

// Multi-head scaled dot-product attention over packed utterances. q, k, v
// are [B * P, D]; scores against padded keys are masked out. Returns the
// concatenated per-head contexts, [B * P, D].
Var attention(Var q, Var k, Var v, std::size_t heads, const PadMask& mask);

// Scalar helpers used by forward code that does not need a graph.
double gelu_value(double x);
double gelu_derivative(double x);

}  // namespace sctc
