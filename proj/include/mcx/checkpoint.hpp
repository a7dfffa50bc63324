// include/mcx/checkpoint.hpp
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

#ifndef MCX_CHECKPOINT_HPP
#define MCX_CHECKPOINT_HPP

#include <Eigen/Core>
#include <json.hpp>
#include <map>
#include <string>

namespace mcx {

using TensorMap = std::map<std::string, Eigen::MatrixXf>;

// On-disk container for named float tensors grouped into sections (model
// parameters, optimizer moments, ...) plus free-form JSON metadata.
//
// Layout: 8-byte magic, u32 little-endian manifest length, manifest JSON,
// then raw little-endian float32 tensor data (column-major) in manifest
// order. Round-trips bit-exactly and byte-identically.
struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, TensorMap> sections;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);  // throws on malformed files

}  // namespace mcx

#endif  // MCX_CHECKPOINT_HPP
