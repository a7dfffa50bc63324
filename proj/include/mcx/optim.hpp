// include/mcx/optim.hpp
//
// Copyright 2026 mcextract authors
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

#ifndef MCX_OPTIM_HPP
#define MCX_OPTIM_HPP

#include <cstdint>

#include "mcx/model.hpp"

namespace mcx {

// Adaptive-moment gradient descent with bias correction.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  ParamMap<float> m;  // first moments, same keys/shapes as the parameters
  ParamMap<float> v;  // second moments
  std::int64_t step = 0;
};

AdamState init_adam(const ParamMap<float>& params);

// One update over every tensor; element math in double, storage in float.
// Throws on key or shape mismatches.
void adam_step(ParamMap<float>& params, const ParamMap<float>& grads, AdamState& state,
               const AdamConfig& cfg);

// Gradient utilities for fixed-order accumulation.
ParamMap<float> zeros_like(const ParamMap<float>& params);
void axpy(ParamMap<float>& acc, const ParamMap<float>& grads, float scale);
void scale_params(ParamMap<float>& params, float scale);
double global_norm(const ParamMap<float>& grads);
// Rescales in place when the global norm exceeds max_norm; returns the norm.
double clip_global_norm(ParamMap<float>& grads, double max_norm);

}  // namespace mcx

#endif  // MCX_OPTIM_HPP
