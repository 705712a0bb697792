// sctc/grad_check.h
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

#include <functional>
#include <span>
#include <string>

#include "sctc/autograd.h"

namespace sctc {

struct GradCheckResult {
  double max_rel_error = 0.0;
  // Location of the worst element, for diagnostics.
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

// Builds a scalar on a fresh graph from the current parameter values.
using ScalarFn = std::function<Var(Graph&)>;

// Compares backward() against central differences for every element of
// every parameter. Relative error is |a - n| / max(|a|, |n|, 1e-12).
// Parameter gradients are reset before and after the check.
GradCheckResult grad_check(const ScalarFn& f, std::span<Parameter* const> params, double h = 1e-5);

}  // namespace sctc
