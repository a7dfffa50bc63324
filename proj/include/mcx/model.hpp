// include/mcx/model.hpp
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

#ifndef MCX_MODEL_HPP
#define MCX_MODEL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mcx/autodiff.hpp"
#include "mcx/config.hpp"
#include "mcx/wav.hpp"

namespace mcx {

using ad::Mat;
using ad::Tape;
using ad::Var;

template <typename S>
using ParamMap = std::map<std::string, Mat<S>>;

struct TensorShape {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool operator==(const TensorShape&) const = default;
};

// The complete tensor inventory for a config; the single source of truth for
// initialization, checkpoint validation, and parameter binding.
std::map<std::string, TensorShape> param_shapes(const ModelConfig& cfg);

// Deterministic init: weights uniform in +-1/sqrt(fan_in), slope vectors
// (".prelu") at 0.25, norm gains (".norm.gamma") at 1, norm shifts and biases
// (".norm.beta", ".b") at 0. Per-tensor seeded by name.
ParamMap<float> init_from_shapes(const std::map<std::string, TensorShape>& shapes,
                                 std::uint64_t seed);
ParamMap<float> init_params(const ModelConfig& cfg, std::uint64_t seed);

template <typename S>
ParamMap<S> cast_params(const ParamMap<float>& params) {
  ParamMap<S> out;
  for (const auto& [name, tensor] : params) out.emplace(name, tensor.template cast<S>());
  return out;
}

// Model checkpoint files: shape-validated parameter save/load with the config
// embedded so a file is self-describing.
void save_params(const std::string& path, const ModelConfig& cfg, const ParamMap<float>& params);
std::pair<ModelConfig, ParamMap<float>> load_params(const std::string& path);

// Frame count of the learned front end; throws if the signal is shorter than
// one kernel.
int frame_count(int n_samples, int kernel_len, int stride);

// Frame matrices consumed by the encoders: one row per frame. Single-channel
// rows are kernel_len wide; multi-channel rows concatenate every channel's
// window (channel 0 first).
template <typename S>
Mat<S> frame_rows(const std::vector<float>& x, int kernel_len, int stride);
template <typename S>
Mat<S> frame_rows_multi(const MultiWaveform& x, int kernel_len, int stride);

// Builds the extraction network on a tape. All methods are pure graph
// constructors; intermediate pieces are exposed for targeted tests.
template <typename S>
class ExtractorGraph {
 public:
  ExtractorGraph(Tape<S>& tape, const std::map<std::string, Var>& params,
                 const ModelConfig& cfg);

  // frames: F x kernel_len constant -> F x spectral_dim (ReLU, bias-free).
  Var spectral_encode(Var frames);
  // frames: F x (num_mics * kernel_len) -> F x spatial_dim (ReLU, bias-free).
  Var spatial_encode(Var frames);
  // Residual block: expand 1x1 / depthwise-3 dilated / contract 1x1, with
  // slope activation + per-frame norm after the first two convs.
  Var tcn_block(const std::string& prefix, Var x, int dilation);
  // Residual multi-resolution block: expand, num_scales stride-2
  // downsamplings, nearest-neighbor upsamplings with additive skips,
  // contract. Throws if frames < 2^num_scales.
  Var u_conv_block(const std::string& prefix, Var x);
  // y: F x separator_input_dim -> max_speakers masks, each F x feature_dim,
  // values in (0, 1). In multiply mode, emb_gates must hold max_speakers
  // 1 x channels vectors; otherwise it must be empty.
  std::vector<Var> separator(Var y, const std::vector<Var>& emb_gates);
  // y: F x feature_dim, one embedding Var (1 x embedding_dim) per slot ->
  // F x speaker_dim. All-zero embeddings give an exactly zero output.
  Var speaker_stack(Var y, const std::vector<Var>& embeddings);
  // masked representation F x feature_dim -> waveform target_len x 1
  // (overlap-added transposed conv, scalar bias, padded/trimmed to length).
  Var decode(Var masked, int target_len);

  // Full path: frames both encoders, applies the conditioning mode, masks the
  // pre-norm representation, decodes each slot. Returns max_speakers outputs
  // of length n_samples x 1, slot k bound to embeddings[k] in conditioned
  // modes. Throws if embeddings are supplied in `none` mode or missing (or
  // mis-sized) in conditioned modes.
  std::vector<Var> forward(const MultiWaveform& mix, const std::vector<Var>& embeddings);
  std::vector<Var> forward(const MultiWaveform& mix,
                           const std::vector<std::vector<float>>& embeddings);

  Tape<S>& tape() { return *tape_; }

 private:
  Var p(const std::string& name) const;  // throws on missing tensors

  Tape<S>* tape_;
  const std::map<std::string, Var>* params_;
  ModelConfig cfg_;
};

// Binds every tensor in `params` as a tape leaf; shapes checked against cfg.
template <typename S>
std::map<std::string, Var> bind_params(Tape<S>& tape, const ParamMap<S>& params,
                                       const ModelConfig& cfg, bool needs_grad);

// Convenience inference entry point (no gradients): runs forward and returns
// one waveform per slot.
std::vector<Waveform> run_extractor(const ModelConfig& cfg, const ParamMap<float>& params,
                                    const MultiWaveform& mix,
                                    const std::vector<std::vector<float>>& embeddings);

}  // namespace mcx

#endif  // MCX_MODEL_HPP
