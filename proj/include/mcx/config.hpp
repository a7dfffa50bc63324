// include/mcx/config.hpp
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

#ifndef MCX_CONFIG_HPP
#define MCX_CONFIG_HPP

#include <json.hpp>
#include <string>

namespace mcx {

// How the extractor is told which speakers to pull out.
//   none:     no speaker information; outputs are unordered (train with PIT).
//   multiply: embeddings gate the separator's mid-stage features and per-slot
//             mask heads multiplicatively.
//   concat:   embeddings are tiled over frames and appended to the separator
//             input.
//   split:    a dedicated speaker stack turns embeddings into per-frame
//             features that are appended to the separator input.
enum class Conditioning { none, multiply, concat, split };

std::string to_string(Conditioning c);
Conditioning conditioning_from_string(const std::string& s);

struct ModelConfig {
  int spectral_dim = 32;       // single-channel encoder features per frame
  int spatial_dim = 8;         // cross-channel encoder features (0 disables)
  int kernel_len = 16;         // encoder kernel length in samples
  int stride = 8;              // encoder hop in samples; must divide kernel_len
  int num_blocks = 4;          // separator depth in residual resampling blocks
  int num_scales = 3;          // down/upsampling steps per block
  int channels = 32;           // separator working width
  int expanded_channels = 64;  // width inside block branches
  int speaker_dim = 16;        // speaker-stack output features per frame
  int embedding_dim = 32;      // speaker embedding length
  int max_speakers = 2;        // output slots per mixture
  int num_mics = 2;            // input channels
  Conditioning conditioning = Conditioning::split;
  int sample_rate = 8000;

  int feature_dim() const { return spectral_dim + spatial_dim; }
  int separator_input_dim() const;

  void validate() const;  // throws std::invalid_argument
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);  // unknown keys rejected
};

}  // namespace mcx

#endif  // MCX_CONFIG_HPP
