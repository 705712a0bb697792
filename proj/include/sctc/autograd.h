// sctc/autograd.h
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
#include <deque>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sctc/tensor.h"

namespace sctc {

// A trainable tensor with its accumulated gradient.
struct Parameter {
  Parameter(std::string name, Tensor value);

  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0); }
};

// Owns parameters in registration order. References stay valid for the
// lifetime of the store.
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  // Moving keeps element addresses, so Parameter pointers stay valid.
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  Parameter& add(std::string name, Tensor value);
  Parameter* find(std::string_view name);
  const Parameter* find(std::string_view name) const;
  Parameter& at(std::string_view name);

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  std::size_t value_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::deque<Parameter> params_;
};

// Valid frame counts of utterances packed into one padded batch. Row
// b * padded_length + s of a batch tensor belongs to utterance b, frame s.
struct PadMask {
  std::size_t padded_length = 0;
  std::vector<std::size_t> lengths;

  static PadMask single(std::size_t frames) { return {frames, {frames}}; }

  std::size_t batch() const { return lengths.size(); }
  std::size_t rows() const { return padded_length * lengths.size(); }
  bool valid(std::size_t b, std::size_t s) const { return s < lengths[b]; }
  void validate() const;
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; only meaningful while the
// owning graph is alive.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run tape. Nodes are appended in evaluation order, so the tape is
// always topologically sorted; backward walks it in reverse.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // A leaf whose gradient can be read back with grad() after backward.
  Var input(Tensor value);
  Var param(Parameter& p);

  // Seeds d(root)/d(root) = 1 and accumulates into every reachable
  // Parameter's grad. Calling twice accumulates twice.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& grad(Var v) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Op plumbing.
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);
  // Gradient buffer of a node, allocated on first use; nullptr when the node
  // does not require a gradient.
  Tensor* grad_buffer(std::size_t id);
  const Tensor& upstream(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

}  // namespace sctc
