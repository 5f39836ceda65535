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

#include "chromatix/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace chromatix::nn {

namespace {

double evaluate(const LossBuilder& build, const std::vector<TensorF64>& leaves) {
  GraphF64 g;
  std::vector<Var> vars;
  for (const TensorF64& t : leaves) vars.push_back(g.parameter(t));
  return g.value(build(g, vars)).item();
}

}  // namespace

GradCheckResult check_gradients(const LossBuilder& build, std::vector<TensorF64> leaves,
                                double h, double floor) {
  GraphF64 g;
  std::vector<Var> vars;
  for (const TensorF64& t : leaves) vars.push_back(g.parameter(t));
  const Var loss = build(g, vars);
  g.backward(loss);

  GradCheckResult result;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const TensorF64& grad = g.grad(vars[l]);
    for (std::size_t i = 0; i < leaves[l].size(); ++i) {
      const double orig = leaves[l][i];
      leaves[l][i] = orig + h;
      const double up = evaluate(build, leaves);
      leaves[l][i] = orig - h;
      const double down = evaluate(build, leaves);
      leaves[l][i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grad.empty() ? 0.0 : grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > result.max_relative_error || result.worst_leaf < 0) {
        result = {std::max(rel, result.max_relative_error), static_cast<int>(l), i, analytic, numeric};
      }
    }
  }
  return result;
}

}  // namespace chromatix::nn
