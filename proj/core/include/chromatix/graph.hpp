// Copyright 2026 The Chromatix Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "chromatix/tensor.hpp"

namespace chromatix::nn {

enum class OpKind {
  kInput,
  kParameter,
  kConv2d,
  kConvTranspose2d,
  kBatchNorm,
  kRelu,
  kTanh,
  kConcat,
  kSliceBatch,
  kUpsampleBilinear,
  kAdd,
  kSub,
  kMul,
  kScale,
  kSum,
  kSpatialMean,
  kSmoothL1,
  kSoftmaxCrossEntropy,
};

std::string_view op_name(OpKind kind);

/// Handle to a node of a Graph.
struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
  friend bool operator==(Var, Var) = default;
};

/// Tape of operations supporting one reverse sweep.
///
/// Nodes are appended in topological order, so the graph is acyclic by
/// construction. Only nodes that transitively depend on a parameter carry
/// adjoints.
template <typename T>
class BasicGraph {
 public:
  using TensorT = BasicTensor<T>;
  using BackwardFn = std::function<void(BasicGraph&, int self)>;

  /// Constant leaf; receives no gradient.
  Var input(TensorT value) {
    return push(OpKind::kInput, {}, std::move(value), nullptr, false);
  }

  /// Differentiable leaf.
  Var parameter(TensorT value) {
    return push(OpKind::kParameter, {}, std::move(value), nullptr, true);
  }

  /// Appends an op node. `fn` propagates this node's adjoint to its inputs
  /// and is skipped when no input requires a gradient.
  Var record(OpKind kind, std::vector<int> inputs, TensorT value,
             BackwardFn fn) {
    bool needs = false;
    for (int i : inputs) needs = needs || nodes_.at(i).requires_grad;
    return push(kind, std::move(inputs), std::move(value), std::move(fn),
                needs);
  }

  const TensorT& value(Var v) const { return node(v.id).value; }
  TensorT& mutable_value(Var v) { return node(v.id).value; }
  OpKind kind(Var v) const { return node(v.id).kind; }
  bool requires_grad(Var v) const { return node(v.id).requires_grad; }
  bool requires_grad(int id) const { return node(id).requires_grad; }
  const std::vector<int>& inputs(int id) const { return node(id).inputs; }
  const TensorT& value(int id) const { return node(id).value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Adjoint of `v` after backward(); empty if `v` received none.
  const TensorT& grad(Var v) const { return node(v.id).grad; }

  /// Adjoint buffer of node `id`, zero-allocated on first use.
  TensorT& grad_buffer(int id) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad = TensorT(n.value.dims(), T{0});
    return n.grad;
  }

  void backward(Var loss) {
    Node& root = node(loss.id);
    if (root.value.size() != 1) {
      throw ContractError("backward: loss must be scalar, got " +
                          dims_string(root.value.dims()));
    }
    for (Node& n : nodes_) n.grad = TensorT();
    if (!root.requires_grad) return;
    grad_buffer(loss.id)[0] = T{1};
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
      n.backward(*this, id);
    }
  }

 private:
  struct Node {
    OpKind kind;
    std::vector<int> inputs;
    TensorT value;
    TensorT grad;
    BackwardFn backward;
    bool requires_grad;
  };

  Var push(OpKind kind, std::vector<int> inputs, TensorT value, BackwardFn fn,
           bool requires_grad) {
    nodes_.push_back(Node{kind, std::move(inputs), std::move(value), TensorT(),
                          std::move(fn), requires_grad});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(int id) {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
      throw ContractError("graph: invalid node id " + std::to_string(id));
    }
    return nodes_[static_cast<std::size_t>(id)];
  }
  const Node& node(int id) const {
    return const_cast<BasicGraph*>(this)->node(id);
  }

  std::vector<Node> nodes_;
};

using Graph = BasicGraph<float>;
using GraphF64 = BasicGraph<double>;

}  // namespace chromatix::nn
