// src/optim.cpp
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

#include "mcx/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace mcx {
namespace {

void check_same_layout(const ParamMap<float>& a, const ParamMap<float>& b, const char* what) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": key mismatch");
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first)
      throw std::invalid_argument(std::string(what) + ": key mismatch at '" + ia->first + "'");
    if (ia->second.rows() != ib->second.rows() || ia->second.cols() != ib->second.cols())
      throw std::invalid_argument(std::string(what) + ": shape mismatch at '" + ia->first + "'");
  }
}

}  // namespace

AdamState init_adam(const ParamMap<float>& params) {
  AdamState state;
  state.m = zeros_like(params);
  state.v = zeros_like(params);
  return state;
}

void adam_step(ParamMap<float>& params, const ParamMap<float>& grads, AdamState& state,
               const AdamConfig& cfg) {
  check_same_layout(params, grads, "adam_step");
  check_same_layout(params, state.m, "adam_step moments");
  state.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (auto& [name, tensor] : params) {
    const Mat<float>& g = grads.at(name);
    Mat<float>& m = state.m.at(name);
    Mat<float>& v = state.v.at(name);
    for (Eigen::Index i = 0; i < tensor.size(); ++i) {
      const double gi = g.data()[i];
      const double mi = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
      m.data()[i] = static_cast<float>(mi);
      v.data()[i] = static_cast<float>(vi);
      const double update = cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps);
      tensor.data()[i] = static_cast<float>(tensor.data()[i] - update);
    }
  }
}

ParamMap<float> zeros_like(const ParamMap<float>& params) {
  ParamMap<float> out;
  for (const auto& [name, tensor] : params)
    out.emplace(name, Mat<float>::Zero(tensor.rows(), tensor.cols()));
  return out;
}

void axpy(ParamMap<float>& acc, const ParamMap<float>& grads, float scale) {
  check_same_layout(acc, grads, "axpy");
  for (auto& [name, tensor] : acc) tensor += scale * grads.at(name);
}

void scale_params(ParamMap<float>& params, float scale) {
  for (auto& [name, tensor] : params) {
    (void)name;
    tensor *= scale;
  }
}

double global_norm(const ParamMap<float>& grads) {
  double sq = 0.0;
  for (const auto& [name, tensor] : grads) {
    (void)name;
    sq += tensor.cast<double>().squaredNorm();
  }
  return std::sqrt(sq);
}

double clip_global_norm(ParamMap<float>& grads, double max_norm) {
  if (max_norm <= 0.0) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
  const double norm = global_norm(grads);
  if (norm > max_norm) scale_params(grads, static_cast<float>(max_norm / norm));
  return norm;
}

}  // namespace mcx
