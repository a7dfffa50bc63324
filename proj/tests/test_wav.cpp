// tests/test_wav.cpp
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

#include "mcx/wav.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "mcx/rng.hpp"

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("rms of a known signal") {
  std::vector<float> v = {3.0f, 4.0f};
  CHECK(mcx::rms(v) == std::sqrt(12.5));
  CHECK_THROWS_AS(mcx::rms(std::vector<float>{}), std::invalid_argument);
}

TEST_CASE("pcm16 round trip is bit-exact for quantized data") {
  mcx::Rng rng(7);
  mcx::MultiWaveform w;
  w.sample_rate = 8000;
  w.channels.resize(2);
  for (int i = 0; i < 500; ++i) {
    // start from exactly representable quantized values
    std::int16_t a = static_cast<std::int16_t>(rng.below(65536) - 32768);
    std::int16_t b = static_cast<std::int16_t>(rng.below(65536) - 32768);
    w.channels[0].push_back(static_cast<float>(a) / 32768.0f);
    w.channels[1].push_back(static_cast<float>(b) / 32768.0f);
  }
  w.channels[0][0] = -1.0f;                     // -32768
  w.channels[1][0] = 1.0f - 0x1.0p-15f;         // +32767

  const std::string path = temp_path("mcx_pcm16.wav");
  mcx::write_wav(path, w, mcx::WavEncoding::pcm16);
  mcx::MultiWaveform r = mcx::read_wav(path);

  REQUIRE(r.n_channels() == 2);
  REQUIRE(r.n_samples() == w.n_samples());
  CHECK(r.sample_rate == 8000);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < w.n_samples(); ++i)
      CHECK(r.channels[c][i] == w.channels[c][i]);
}

TEST_CASE("pcm16 clips out-of-range samples to the limiter bound") {
  mcx::Waveform w;
  w.samples = {1.5f, -2.0f, 0.25f};
  const std::string path = temp_path("mcx_clip.wav");
  mcx::write_wav(path, w, mcx::WavEncoding::pcm16);
  mcx::MultiWaveform r = mcx::read_wav(path);
  CHECK(r.channels[0][0] == 32767.0f / 32768.0f);
  CHECK(r.channels[0][1] == -1.0f);
  CHECK(r.channels[0][2] == 0.25f);
}

TEST_CASE("float32 round trip is exact") {
  mcx::Rng rng(11);
  mcx::MultiWaveform w;
  w.sample_rate = 16000;
  w.channels.resize(2);
  for (int i = 0; i < 300; ++i) {
    w.channels[0].push_back(static_cast<float>(rng.uniform(-1.3, 1.3)));
    w.channels[1].push_back(static_cast<float>(rng.uniform(-1.3, 1.3)));
  }
  const std::string path = temp_path("mcx_f32.wav");
  mcx::write_wav(path, w, mcx::WavEncoding::float32);
  mcx::MultiWaveform r = mcx::read_wav(path);
  REQUIRE(r.n_channels() == 2);
  REQUIRE(r.n_samples() == 300);
  CHECK(r.sample_rate == 16000);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 300; ++i) CHECK(r.channels[c][i] == w.channels[c][i]);
}

TEST_CASE("wav reader rejects malformed input") {
  CHECK_THROWS_AS(mcx::read_wav(temp_path("mcx_does_not_exist.wav")), std::runtime_error);

  const std::string garbage = temp_path("mcx_garbage.wav");
  {
    std::ofstream f(garbage, std::ios::binary);
    f << "this is not a wav file at all";
  }
  CHECK_THROWS_AS(mcx::read_wav(garbage), std::runtime_error);

  const std::string truncated = temp_path("mcx_truncated.wav");
  {
    mcx::Waveform w;
    w.samples.assign(100, 0.5f);
    mcx::write_wav(truncated, w, mcx::WavEncoding::pcm16);
    std::ifstream in(truncated, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(truncated, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(mcx::read_wav(truncated), std::runtime_error);
}

TEST_CASE("wav writer rejects inconsistent channels") {
  mcx::MultiWaveform w;
  w.channels = {{0.0f, 0.1f}, {0.0f}};
  CHECK_THROWS_AS(mcx::write_wav(temp_path("mcx_bad.wav"), w, mcx::WavEncoding::pcm16),
                  std::invalid_argument);
  mcx::MultiWaveform empty;
  CHECK_THROWS_AS(mcx::write_wav(temp_path("mcx_bad.wav"), empty, mcx::WavEncoding::pcm16),
                  std::invalid_argument);
}
