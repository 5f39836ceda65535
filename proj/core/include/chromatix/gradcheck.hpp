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
#include <span>
#include <string>
#include <vector>

#include "chromatix/graph.hpp"

namespace chromatix::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  int worst_leaf = -1;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Builds a scalar loss from parameter leaves holding `leaves`.
using LossBuilder = std::function<Var(GraphF64&, std::span<const Var>)>;

/// Compares reverse-mode gradients with central differences of step `h`.
/// Relative error is |a - n| / max(|a|, |n|, floor).
GradCheckResult check_gradients(const LossBuilder& build, std::vector<TensorF64> leaves,
                                double h = 1e-4, double floor = 1e-3);

}  // namespace chromatix::nn
