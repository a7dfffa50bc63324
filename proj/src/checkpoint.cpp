// src/checkpoint.cpp
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

#include "mcx/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace mcx {
namespace {

constexpr char kMagic[8] = {'M', 'C', 'X', 'T', 'N', 'S', 'R', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json manifest;
  manifest["meta"] = ck.meta;
  manifest["sections"] = nlohmann::json::object();
  for (const auto& [section, tensors] : ck.sections) {
    auto& list = manifest["sections"][section] = nlohmann::json::array();
    for (const auto& [name, tensor] : tensors)
      list.push_back({{"name", name}, {"rows", tensor.rows()}, {"cols", tensor.cols()}});
  }
  const std::string manifest_text = manifest.dump();
  if (manifest_text.size() > 0xffffffffull)
    throw std::invalid_argument("checkpoint: manifest too large");

  std::string blob;
  blob.append(kMagic, sizeof(kMagic));
  put_u32(blob, static_cast<std::uint32_t>(manifest_text.size()));
  blob += manifest_text;
  for (const auto& [section, tensors] : ck.sections) {
    (void)section;
    for (const auto& [name, tensor] : tensors) {
      (void)name;
      blob.append(reinterpret_cast<const char*>(tensor.data()),
                  static_cast<std::size_t>(tensor.size()) * sizeof(float));
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  f.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
  std::string blob((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (blob.size() < sizeof(kMagic) + 4 || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic: " + path);
  const std::uint32_t manifest_len = get_u32(blob.data() + sizeof(kMagic));
  std::size_t offset = sizeof(kMagic) + 4;
  if (blob.size() < offset + manifest_len)
    throw std::runtime_error("checkpoint: truncated manifest: " + path);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(blob.substr(offset, manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: manifest parse error: " + std::string(e.what()));
  }
  offset += manifest_len;

  Checkpoint ck;
  ck.meta = manifest.at("meta");
  for (const auto& [section, list] : manifest.at("sections").items()) {
    TensorMap tensors;
    for (const auto& entry : list) {
      const auto name = entry.at("name").get<std::string>();
      const auto rows = entry.at("rows").get<Eigen::Index>();
      const auto cols = entry.at("cols").get<Eigen::Index>();
      if (rows < 0 || cols < 0) throw std::runtime_error("checkpoint: bad tensor shape");
      Eigen::MatrixXf tensor(rows, cols);
      const std::size_t n_bytes = static_cast<std::size_t>(tensor.size()) * sizeof(float);
      if (blob.size() < offset + n_bytes)
        throw std::runtime_error("checkpoint: truncated tensor data: " + path);
      std::memcpy(tensor.data(), blob.data() + offset, n_bytes);
      offset += n_bytes;
      tensors.emplace(name, std::move(tensor));
    }
    ck.sections.emplace(section, std::move(tensors));
  }
  if (offset != blob.size())
    throw std::runtime_error("checkpoint: trailing bytes: " + path);
  return ck;
}

}  // namespace mcx
