// src/wav.cpp
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

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace mcx {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

std::int16_t quantize_pcm16(float s) {
  // Limiter bound keeps the quantized value inside int16.
  double c = static_cast<double>(s);
  if (c < -1.0) c = -1.0;
  const double hi = 1.0 - 0x1.0p-15;
  if (c > hi) c = hi;
  return static_cast<std::int16_t>(std::lround(c * 32768.0));
}

struct Cursor {
  const unsigned char* p;
  std::size_t n;
  std::size_t pos = 0;

  void need(std::size_t k, const char* what) {
    if (pos + k > n) throw std::runtime_error(std::string("wav: truncated ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = static_cast<std::uint32_t>(p[pos]) |
                      (static_cast<std::uint32_t>(p[pos + 1]) << 8) |
                      (static_cast<std::uint32_t>(p[pos + 2]) << 16) |
                      (static_cast<std::uint32_t>(p[pos + 3]) << 24);
    pos += 4;
    return v;
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(p[pos] | (p[pos + 1] << 8));
    pos += 2;
    return v;
  }
  bool tag(const char* t) {
    need(4, "chunk tag");
    bool ok = std::memcmp(p + pos, t, 4) == 0;
    pos += 4;
    return ok;
  }
};

}  // namespace

void write_wav(const std::string& path, const MultiWaveform& audio, WavEncoding encoding) {
  if (audio.channels.empty()) throw std::invalid_argument("wav: no channels");
  const std::size_t n = audio.channels[0].size();
  for (const auto& ch : audio.channels) {
    if (ch.size() != n) throw std::invalid_argument("wav: channel length mismatch");
  }
  if (audio.sample_rate <= 0) throw std::invalid_argument("wav: bad sample rate");

  const std::uint16_t n_ch = static_cast<std::uint16_t>(audio.channels.size());
  const std::uint16_t bytes_per_sample = encoding == WavEncoding::pcm16 ? 2 : 4;
  const std::uint16_t block_align = static_cast<std::uint16_t>(n_ch * bytes_per_sample);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(n * block_align);

  std::string buf;
  buf.reserve(44 + data_bytes);
  buf += "RIFF";
  put_u32(buf, 36 + data_bytes);
  buf += "WAVE";
  buf += "fmt ";
  put_u32(buf, 16);
  put_u16(buf, encoding == WavEncoding::pcm16 ? kFormatPcm : kFormatFloat);
  put_u16(buf, n_ch);
  put_u32(buf, static_cast<std::uint32_t>(audio.sample_rate));
  put_u32(buf, static_cast<std::uint32_t>(audio.sample_rate) * block_align);
  put_u16(buf, block_align);
  put_u16(buf, static_cast<std::uint16_t>(bytes_per_sample * 8));
  buf += "data";
  put_u32(buf, data_bytes);

  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint16_t c = 0; c < n_ch; ++c) {
      if (encoding == WavEncoding::pcm16) {
        std::int16_t q = quantize_pcm16(audio.channels[c][i]);
        put_u16(buf, static_cast<std::uint16_t>(q));
      } else {
        std::uint32_t bits;
        float s = audio.channels[c][i];
        std::memcpy(&bits, &s, 4);
        put_u32(buf, bits);
      }
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("wav: cannot open for write: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("wav: write failed: " + path);
}

void write_wav(const std::string& path, const Waveform& audio, WavEncoding encoding) {
  MultiWaveform m;
  m.sample_rate = audio.sample_rate;
  m.channels.push_back(audio.samples);
  write_wav(path, m, encoding);
}

MultiWaveform read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("wav: cannot open: " + path);
  std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Cursor cur{reinterpret_cast<const unsigned char*>(raw.data()), raw.size()};

  if (!cur.tag("RIFF")) throw std::runtime_error("wav: missing RIFF magic: " + path);
  cur.u32("riff size");
  if (!cur.tag("WAVE")) throw std::runtime_error("wav: missing WAVE magic: " + path);

  std::uint16_t format = 0, n_ch = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  MultiWaveform out;

  while (cur.pos + 8 <= cur.n) {
    cur.need(4, "chunk tag");
    char tag[5] = {0};
    std::memcpy(tag, cur.p + cur.pos, 4);
    cur.pos += 4;
    std::uint32_t size = cur.u32("chunk size");

    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (size < 16) throw std::runtime_error("wav: short fmt chunk: " + path);
      std::size_t end = cur.pos + size;
      format = cur.u16("format");
      n_ch = cur.u16("channels");
      rate = cur.u32("rate");
      cur.u32("byte rate");
      cur.u16("block align");
      bits = cur.u16("bits");
      cur.pos = end;
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("wav: data before fmt: " + path);
      if (n_ch == 0) throw std::runtime_error("wav: zero channels: " + path);
      bool pcm = format == kFormatPcm && bits == 16;
      bool flt = format == kFormatFloat && bits == 32;
      if (!pcm && !flt)
        throw std::runtime_error("wav: unsupported encoding (format " +
                                 std::to_string(format) + ", " + std::to_string(bits) +
                                 " bit): " + path);
      cur.need(size, "data chunk");
      const std::uint16_t bps = pcm ? 2 : 4;
      const std::size_t frame = static_cast<std::size_t>(bps) * n_ch;
      const std::size_t n = size / frame;
      out.sample_rate = static_cast<int>(rate);
      out.channels.assign(n_ch, std::vector<float>(n));
      const unsigned char* d = cur.p + cur.pos;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::uint16_t c = 0; c < n_ch; ++c) {
          const unsigned char* s = d + i * frame + c * bps;
          if (pcm) {
            std::int16_t q = static_cast<std::int16_t>(s[0] | (s[1] << 8));
            out.channels[c][i] = static_cast<float>(q) / 32768.0f;
          } else {
            std::uint32_t b = static_cast<std::uint32_t>(s[0]) | (s[1] << 8) |
                              (static_cast<std::uint32_t>(s[2]) << 16) |
                              (static_cast<std::uint32_t>(s[3]) << 24);
            float v;
            std::memcpy(&v, &b, 4);
            out.channels[c][i] = v;
          }
        }
      }
      return out;
    } else {
      // Skip unknown chunks (fact, LIST, ...); chunks are word-aligned.
      cur.need(size, "chunk body");
      cur.pos += size;
    }
    if (cur.pos & 1) ++cur.pos;
  }
  throw std::runtime_error("wav: no data chunk: " + path);
}

namespace {
template <typename T>
double rms_impl(const std::vector<T>& samples) {
  if (samples.empty()) throw std::invalid_argument("rms: empty signal");
  double acc = 0.0;
  for (T s : samples) acc += static_cast<double>(s) * static_cast<double>(s);
  return std::sqrt(acc / static_cast<double>(samples.size()));
}
}  // namespace

double rms(const std::vector<float>& samples) { return rms_impl(samples); }
double rms(const std::vector<double>& samples) { return rms_impl(samples); }

}  // namespace mcx
