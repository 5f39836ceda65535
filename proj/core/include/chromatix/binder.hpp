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

#include <map>
#include <string>

#include "chromatix/graph.hpp"
#include "chromatix/weights.hpp"

namespace chromatix::nn {

/// Lazily places named weights into a graph, once per name. Trainable
/// binders create parameter leaves; frozen ones create constant inputs.
template <typename T>
class ParamBinder {
 public:
  ParamBinder(BasicGraph<T>& graph, const ModelWeights& weights, bool trainable)
      : graph_(graph), weights_(weights), trainable_(trainable) {}

  Var operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    BasicTensor<T> value = tensor_cast<T>(weights_.get(name));
    const Var v = trainable_ ? graph_.parameter(std::move(value)) : graph_.input(std::move(value));
    bound_.emplace(name, v);
    return v;
  }

  BasicGraph<T>& graph() noexcept { return graph_; }
  const std::map<std::string, Var>& bound() const noexcept { return bound_; }

 private:
  BasicGraph<T>& graph_;
  const ModelWeights& weights_;
  bool trainable_;
  std::map<std::string, Var> bound_;
};

}  // namespace chromatix::nn
