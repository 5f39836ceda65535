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

#include "chromatix/adam.hpp"

#include <cmath>
#include <string>

namespace chromatix::nn {

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               AdamState& state) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " params but " +
                     std::to_string(grads.size()) + " grads");
  }
  if (state.first_moment.empty()) {
    for (const Tensor* p : params) {
      state.first_moment.emplace_back(p->dims(), 0.0f);
      state.second_moment.emplace_back(p->dims(), 0.0f);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " params, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Dims& d = params[i]->dims();
    if (grads[i]->dims() != d || state.first_moment[i].dims() != d) {
      throw ShapeError("adam_step: param " + std::to_string(i) + " dims " + dims_string(d) +
                       " vs grad " + dims_string(grads[i]->dims()) + " vs state " +
                       dims_string(state.first_moment[i].dims()));
    }
  }

  ++state.step;
  const AdamOptions& o = state.options;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k];
      const double mk = o.beta1 * m[k] + (1.0 - o.beta1) * gk;
      const double vk = o.beta2 * v[k] + (1.0 - o.beta2) * gk * gk;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double update = o.lr * (mk / c1) / (std::sqrt(vk / c2) + o.eps);
      p[k] = static_cast<float>(p[k] - update);
    }
  }
}

}  // namespace chromatix::nn
