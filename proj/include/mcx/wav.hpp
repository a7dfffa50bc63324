// include/mcx/wav.hpp
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

#ifndef MCX_WAV_HPP
#define MCX_WAV_HPP

#include <cstddef>
#include <string>
#include <vector>

namespace mcx {

constexpr int kDefaultSampleRate = 8000;

// Mono waveform. Samples are float32 so that float-encoded files round-trip
// bit-exactly through memory.
struct Waveform {
  int sample_rate = kDefaultSampleRate;
  std::vector<float> samples;

  std::size_t size() const { return samples.size(); }
};

// Channel-major multi-channel waveform; all channels share length and rate.
struct MultiWaveform {
  int sample_rate = kDefaultSampleRate;
  std::vector<std::vector<float>> channels;

  std::size_t n_channels() const { return channels.size(); }
  std::size_t n_samples() const { return channels.empty() ? 0 : channels[0].size(); }
  Waveform channel(std::size_t c) const { return Waveform{sample_rate, channels.at(c)}; }
};

enum class WavEncoding { pcm16, float32 };

// RIFF/WAVE writer. pcm16 clips to [-1, 1 - 2^-15] before quantizing;
// float32 stores samples verbatim. Throws std::runtime_error on I/O failure
// and std::invalid_argument on inconsistent input.
void write_wav(const std::string& path, const MultiWaveform& audio, WavEncoding encoding);
void write_wav(const std::string& path, const Waveform& audio, WavEncoding encoding);

// Reads pcm16 or float32 RIFF/WAVE files written by write_wav (and the common
// chunk layouts produced by other tools). Throws std::runtime_error on
// malformed or unsupported files.
MultiWaveform read_wav(const std::string& path);

// Root mean square over the full signal; errors on empty input.
double rms(const std::vector<float>& samples);
double rms(const std::vector<double>& samples);

}  // namespace mcx

#endif  // MCX_WAV_HPP
