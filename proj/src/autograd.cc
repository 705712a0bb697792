// src/autograd.cc
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

#include "sctc/autograd.h"

#include "sctc/error.h"

namespace sctc {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape())) {}

Parameter& ParameterStore::add(std::string name, Tensor value) {
  if (find(name) != nullptr) throw ContractError("duplicate parameter name: " + name);
  return params_.emplace_back(std::move(name), std::move(value));
}

Parameter* ParameterStore::find(std::string_view name) {
  for (auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Parameter* ParameterStore::find(std::string_view name) const {
  for (const auto& p : params_) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

Parameter& ParameterStore::at(std::string_view name) {
  Parameter* p = find(name);
  if (p == nullptr) throw ContractError("unknown parameter: " + std::string(name));
  return *p;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::size_t ParameterStore::value_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void PadMask::validate() const {
  if (lengths.empty()) throw InvalidShape("pad mask has no utterances");
  for (std::size_t len : lengths) {
    if (len == 0 || len > padded_length) {
      throw InvalidShape("pad mask length " + std::to_string(len) + " outside [1, " +
                         std::to_string(padded_length) + "]");
    }
  }
}

const Tensor& Var::value() const { return graph_->value(id_); }

Var Graph::constant(Tensor value) {
  nodes_.push_back({std::move(value), {}, false, nullptr, {}});
  return {this, nodes_.size() - 1};
}

Var Graph::input(Tensor value) {
  nodes_.push_back({std::move(value), {}, true, nullptr, {}});
  return {this, nodes_.size() - 1};
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
  nodes_.push_back({p.value, {}, true, &p, {}});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Graph::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  nodes_.push_back({std::move(value), {}, needs, nullptr, needs ? std::move(backward) : BackwardFn{}});
  return {this, nodes_.size() - 1};
}

Tensor* Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
  return &n.grad;
}

const Tensor& Graph::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.grad.empty()) throw ContractError("no gradient recorded for node " + std::to_string(v.id()));
  return n.grad;
}

void Graph::backward(Var root) {
  if (root.value().size() != 1) {
    throw ContractError("backward root must be scalar, got shape " + shape_string(root.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  Tensor* seed = grad_buffer(root.id());
  if (seed == nullptr) return;
  (*seed)[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) {
      double* dst = n.param->grad.data();
      const double* src = n.grad.data();
      for (std::size_t k = 0; k < n.grad.size(); ++k) dst[k] += src[k];
    }
  }
}

}  // namespace sctc
