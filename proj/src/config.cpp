// src/config.cpp
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

#include "mcx/config.hpp"

#include <stdexcept>

#include "mcx/objectives.hpp"

namespace mcx {

std::string to_string(Conditioning c) {
  switch (c) {
    case Conditioning::none: return "none";
    case Conditioning::multiply: return "multiply";
    case Conditioning::concat: return "concat";
    case Conditioning::split: return "split";
  }
  throw std::logic_error("unreachable");
}

Conditioning conditioning_from_string(const std::string& s) {
  if (s == "none") return Conditioning::none;
  if (s == "multiply") return Conditioning::multiply;
  if (s == "concat") return Conditioning::concat;
  if (s == "split") return Conditioning::split;
  throw std::invalid_argument("unknown conditioning mode '" + s + "'");
}

int ModelConfig::separator_input_dim() const {
  switch (conditioning) {
    case Conditioning::none:
    case Conditioning::multiply: return feature_dim();
    case Conditioning::concat: return feature_dim() + max_speakers * embedding_dim;
    case Conditioning::split: return feature_dim() + speaker_dim;
  }
  throw std::logic_error("unreachable");
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("model config: ") + what);
  };
  require(spectral_dim >= 1, "spectral_dim must be >= 1");
  require(spatial_dim >= 0, "spatial_dim must be >= 0");
  require(kernel_len >= 1, "kernel_len must be >= 1");
  require(stride >= 1 && stride <= kernel_len, "stride must be in [1, kernel_len]");
  require(kernel_len % stride == 0, "stride must divide kernel_len");
  require(num_blocks >= 1, "num_blocks must be >= 1");
  require(num_scales >= 1, "num_scales must be >= 1");
  require(channels >= 1, "channels must be >= 1");
  require(expanded_channels >= 1, "expanded_channels must be >= 1");
  require(speaker_dim >= 1, "speaker_dim must be >= 1");
  require(embedding_dim >= 1, "embedding_dim must be >= 1");
  require(max_speakers >= 1 && max_speakers <= kMaxPitSpeakers,
          "max_speakers out of supported range");
  require(num_mics >= 1, "num_mics must be >= 1");
  require(sample_rate >= 1, "sample_rate must be >= 1");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"spectral_dim", spectral_dim},
          {"spatial_dim", spatial_dim},
          {"kernel_len", kernel_len},
          {"stride", stride},
          {"num_blocks", num_blocks},
          {"num_scales", num_scales},
          {"channels", channels},
          {"expanded_channels", expanded_channels},
          {"speaker_dim", speaker_dim},
          {"embedding_dim", embedding_dim},
          {"max_speakers", max_speakers},
          {"num_mics", num_mics},
          {"conditioning", to_string(conditioning)},
          {"sample_rate", sample_rate}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  const nlohmann::json defaults = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key))
      throw std::invalid_argument("model config: unknown key '" + key + "'");
    (void)value;
  }
  auto get = [&](const char* key, int& field) {
    if (j.contains(key)) field = j.at(key).get<int>();
  };
  get("spectral_dim", c.spectral_dim);
  get("spatial_dim", c.spatial_dim);
  get("kernel_len", c.kernel_len);
  get("stride", c.stride);
  get("num_blocks", c.num_blocks);
  get("num_scales", c.num_scales);
  get("channels", c.channels);
  get("expanded_channels", c.expanded_channels);
  get("speaker_dim", c.speaker_dim);
  get("embedding_dim", c.embedding_dim);
  get("max_speakers", c.max_speakers);
  get("num_mics", c.num_mics);
  get("sample_rate", c.sample_rate);
  if (j.contains("conditioning"))
    c.conditioning = conditioning_from_string(j.at("conditioning").get<std::string>());
  c.validate();
  return c;
}

}  // namespace mcx
