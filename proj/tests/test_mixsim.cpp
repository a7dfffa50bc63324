// tests/test_mixsim.cpp
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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "mcx/mixsim.hpp"
#include "mcx/rng.hpp"
#include "mcx/wav.hpp"

namespace fs = std::filesystem;

namespace {

constexpr double kPi = 3.14159265358979323846;

mcx::SyntheticSpeaker pure_tone_speaker(double f0, double env_rate) {
  mcx::SyntheticSpeaker s;
  s.id = 1;
  s.pool = "train";
  s.f0_hz = f0;
  s.timbre = {1.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  s.envelope_rate_hz = env_rate;
  s.n_enroll = 4;
  return s;
}

// Magnitude of the DFT at an arbitrary frequency (Goertzel-free naive probe).
double dft_magnitude(const std::vector<float>& x, double freq_hz, int sample_rate) {
  double re = 0.0, im = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double ang = 2.0 * kPi * freq_hz * static_cast<double>(t) / sample_rate;
    re += x[t] * std::cos(ang);
    im -= x[t] * std::sin(ang);
  }
  return std::sqrt(re * re + im * im);
}

double dominant_frequency(const std::vector<float>& x, int sample_rate) {
  const double res = static_cast<double>(sample_rate) / static_cast<double>(x.size());
  double best_mag = -1.0, best_freq = 0.0;
  for (double f = res; f < sample_rate / 2.0; f += res) {
    const double mag = dft_magnitude(x, f, sample_rate);
    if (mag > best_mag) {
      best_mag = mag;
      best_freq = f;
    }
  }
  return best_freq;
}

double tail_energy(const std::vector<double>& taps, std::size_t direct) {
  double e = 0.0;
  for (std::size_t i = direct + 1; i < taps.size(); ++i) e += taps[i] * taps[i];
  return e;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

double cos_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return 1.0 - dot;
}

mcx::DatasetSpec tiny_spec() {
  mcx::DatasetSpec spec;
  spec.n_train = 20;
  spec.n_eval = 8;
  spec.n_train_speakers = 6;
  spec.n_eval_speakers = 4;
  spec.duration_s = 0.5;
  spec.rir_tail_len = 160;
  spec.n_enroll = 3;
  spec.seed = 11;
  return spec;
}

}  // namespace

TEST_CASE("utterance synthesis is deterministic and peak-normalized") {
  auto spk = pure_tone_speaker(200.0, 3.0);
  spk.timbre = {0.8, 0.5, 0.2, 0.1, 0.2, 0.1};
  double norm = 0.0;
  for (double g : spk.timbre) norm += g * g;
  for (double& g : spk.timbre) g /= std::sqrt(norm);

  const auto a = mcx::synth_utterance(spk, 0.5, 8000, 42);
  const auto b = mcx::synth_utterance(spk, 0.5, 8000, 42);
  const auto c = mcx::synth_utterance(spk, 0.5, 8000, 43);

  REQUIRE(a.samples.size() == 4000);
  CHECK(a.sample_rate == 8000);
  CHECK(a.samples == b.samples);
  CHECK(a.samples != c.samples);

  float peak = 0.0f;
  for (float v : a.samples) peak = std::max(peak, std::abs(v));
  CHECK(peak == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(peak <= 0.9f + 1e-6f);
}

TEST_CASE("pure-tone utterance concentrates energy at the fundamental") {
  const auto spk = pure_tone_speaker(200.0, 3.0);
  for (std::uint64_t seed : {7ull, 8ull, 9ull}) {
    const auto w = mcx::synth_utterance(spk, 2.0, 8000, seed);
    // 2 s at 8 kHz gives 0.5 Hz resolution; the AM sidebands at 200 +- 3 Hz
    // carry less energy than the carrier, so the peak sits on 200 Hz.
    CHECK(dominant_frequency(w.samples, 8000) == doctest::Approx(200.0).epsilon(1e-9));
  }
}

TEST_CASE("different fundamentals move the spectral peak") {
  const auto low = mcx::synth_utterance(pure_tone_speaker(130.0, 2.0), 2.0, 8000, 3);
  const auto high = mcx::synth_utterance(pure_tone_speaker(317.0, 2.0), 2.0, 8000, 3);
  CHECK(dominant_frequency(low.samples, 8000) == doctest::Approx(130.0).epsilon(0.01));
  CHECK(dominant_frequency(high.samples, 8000) == doctest::Approx(317.0).epsilon(0.01));
}

TEST_CASE("utterance synthesis rejects bad input") {
  auto spk = pure_tone_speaker(200.0, 3.0);
  CHECK_THROWS_AS(mcx::synth_utterance(spk, 0.0, 8000, 1), std::invalid_argument);
  CHECK_THROWS_AS(mcx::synth_utterance(spk, 1.0, 0, 1), std::invalid_argument);
  spk.timbre.clear();
  CHECK_THROWS_AS(mcx::synth_utterance(spk, 1.0, 8000, 1), std::invalid_argument);
}

TEST_CASE("rir has a dominant unit direct tap and a decaying tail") {
  bool delays_ever_differ = false;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    mcx::Rng strength_rng(mcx::derive_seed(900, "rir-strength", seed));
    const double strength = strength_rng.uniform(0.1, 0.6);
    const auto rir = mcx::make_rir(2, 320, strength, seed);
    REQUIRE(rir.taps.size() == 2);

    std::vector<std::size_t> delays;
    for (const auto& taps : rir.taps) {
      std::size_t direct = 0;
      while (direct < taps.size() && taps[direct] == 0.0) ++direct;
      REQUIRE(direct < taps.size());
      CHECK(direct <= 4);
      CHECK(taps[direct] == 1.0);
      CHECK(taps.size() == direct + 320);
      delays.push_back(direct);

      double max_abs = 0.0;
      for (double t : taps) max_abs = std::max(max_abs, std::abs(t));
      CHECK(max_abs == 1.0);

      const std::size_t tail_start = direct + 1;
      const std::size_t tail_len = taps.size() - tail_start;
      const std::size_t half = tail_len / 2;
      double first = 0.0, second = 0.0;
      for (std::size_t i = 0; i < half; ++i) {
        first += taps[tail_start + i] * taps[tail_start + i];
        second += taps[tail_start + half + i] * taps[tail_start + half + i];
      }
      CHECK(second < first);
    }
    if (delays[0] != delays[1]) delays_ever_differ = true;
  }
  CHECK(delays_ever_differ);
}

TEST_CASE("zero reverb strength leaves only the direct tap") {
  const auto rir = mcx::make_rir(2, 320, 0.0, 5);
  for (const auto& taps : rir.taps) {
    int nonzero = 0;
    for (double t : taps) nonzero += t != 0.0;
    CHECK(nonzero == 1);
  }
}

TEST_CASE("tail energy scales with the square of reverb strength") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto weak = mcx::make_rir(2, 320, 0.1, seed);
    const auto strong = mcx::make_rir(2, 320, 0.2, seed);
    for (std::size_t c = 0; c < 2; ++c) {
      std::size_t direct = 0;
      while (weak.taps[c][direct] == 0.0) ++direct;
      const double ew = tail_energy(weak.taps[c], direct);
      const double es = tail_energy(strong.taps[c], direct);
      REQUIRE(ew > 0.0);
      CHECK(es / ew == doctest::Approx(4.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("rir validates its arguments") {
  CHECK_THROWS_AS(mcx::make_rir(0, 320, 0.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(mcx::make_rir(2, 0, 0.5, 1), std::invalid_argument);
  CHECK_THROWS_AS(mcx::make_rir(2, 320, -0.1, 1), std::invalid_argument);
}

TEST_CASE("truncated convolution matches a naive oracle") {
  mcx::Rng rng(77);
  std::vector<double> src(257), taps(31);
  for (auto& v : src) v = rng.gaussian();
  for (auto& v : taps) v = rng.gaussian();

  const auto got = mcx::convolve_truncate(src, taps);
  REQUIRE(got.size() == src.size());
  for (std::size_t n = 0; n < src.size(); ++n) {
    double want = 0.0;
    for (std::size_t m = 0; m <= std::min(n, taps.size() - 1); ++m) want += taps[m] * src[n - m];
    CHECK(got[n] == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("unit tap is the identity") {
    const auto same = mcx::convolve_truncate(src, {1.0});
    CHECK(same == src);
  }
  SUBCASE("delayed tap shifts the signal") {
    const auto shifted = mcx::convolve_truncate(src, {0.0, 0.0, 1.0});
    CHECK(shifted[0] == 0.0);
    CHECK(shifted[1] == 0.0);
    for (std::size_t n = 2; n < src.size(); ++n) CHECK(shifted[n] == src[n - 2]);
  }
}

TEST_CASE("identity rirs and no noise reproduce the source") {
  const auto spk = pure_tone_speaker(150.0, 2.5);
  const auto src = mcx::synth_utterance(spk, 0.25, 8000, 9);
  mcx::Rir identity;
  identity.taps = {{1.0}, {1.0}};
  const auto ex =
      mcx::mix_sources({src}, {identity}, std::numeric_limits<double>::infinity(), 123);

  REQUIRE(ex.mixture.n_channels() == 2);
  CHECK(ex.mixture.channels[0] == src.samples);
  CHECK(ex.mixture.channels[1] == src.samples);
  for (const auto& ch : ex.noise.channels)
    for (float v : ch) CHECK(v == 0.0f);
  CHECK(ex.clean.size() == 1);
  CHECK(ex.clean[0].samples == src.samples);
}

TEST_CASE("mixture decomposes into stored parts plus noise") {
  std::vector<mcx::Waveform> sources = {
      mcx::synth_utterance(pure_tone_speaker(120.0, 2.0), 0.5, 8000, 1),
      mcx::synth_utterance(pure_tone_speaker(260.0, 4.0), 0.5, 8000, 2)};
  std::vector<mcx::Rir> rirs = {mcx::make_rir(2, 160, 0.4, 10), mcx::make_rir(2, 160, 0.4, 11)};
  const auto ex = mcx::mix_sources(sources, rirs, 5.0, 99);

  REQUIRE(ex.reverberant.size() == 2);
  REQUIRE(ex.mixture.n_samples() == 4000);
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < ex.mixture.n_samples(); ++t) {
      const double acc = static_cast<double>(ex.noise.channels[c][t]) +
                         ex.reverberant[0].channels[c][t] + ex.reverberant[1].channels[c][t];
      CHECK(ex.mixture.channels[c][t] == static_cast<float>(acc));
    }
}

TEST_CASE("realized snr matches the requested snr") {
  std::vector<mcx::Waveform> sources = {
      mcx::synth_utterance(pure_tone_speaker(120.0, 2.0), 0.5, 8000, 1),
      mcx::synth_utterance(pure_tone_speaker(260.0, 4.0), 0.5, 8000, 2)};
  std::vector<mcx::Rir> rirs = {mcx::make_rir(2, 160, 0.3, 10), mcx::make_rir(2, 160, 0.3, 11)};
  for (double snr : {0.0, 5.0, 10.0, -3.0}) {
    const auto ex = mcx::mix_sources(sources, rirs, snr, 1234);
    double sig_power = 0.0, noise_power = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t t = 0; t < ex.mixture.n_samples(); ++t) {
        const double s = static_cast<double>(ex.reverberant[0].channels[c][t]) +
                         ex.reverberant[1].channels[c][t];
        sig_power += s * s;
        noise_power += static_cast<double>(ex.noise.channels[c][t]) * ex.noise.channels[c][t];
        ++count;
      }
    const double realized = 10.0 * std::log10(sig_power / noise_power);
    CHECK(realized == doctest::Approx(snr).epsilon(1e-4));
    CHECK(count == 2 * 4000);
  }
}

TEST_CASE("mixing validates its inputs") {
  const auto src = mcx::synth_utterance(pure_tone_speaker(150.0, 2.0), 0.25, 8000, 3);
  mcx::Rir rir = mcx::make_rir(2, 64, 0.2, 4);
  CHECK_THROWS_AS(mcx::mix_sources({}, {}, 5.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(mcx::mix_sources({src}, {rir, rir}, 5.0, 1), std::invalid_argument);

  auto shorter = src;
  shorter.samples.pop_back();
  CHECK_THROWS_AS(mcx::mix_sources({src, shorter}, {rir, rir}, 5.0, 1), std::invalid_argument);

  mcx::Waveform silent;
  silent.samples.assign(100, 0.0f);
  mcx::Rir identity;
  identity.taps = {{1.0}};
  CHECK_THROWS_AS(mcx::mix_sources({silent}, {identity}, 5.0, 1), std::invalid_argument);
}

TEST_CASE("speaker pools satisfy the separation rules") {
  mcx::DatasetSpec spec = tiny_spec();
  const auto pool = mcx::sample_speaker_pool(spec, "train", 8, 100, 21);
  REQUIRE(pool.size() == 8);

  bool has_similar = false, has_dissimilar = false;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& s = pool[i];
    CHECK(s.id == 100 + static_cast<int>(i));
    CHECK(s.pool == "train");
    CHECK(s.f0_hz >= spec.f0_lo_hz);
    CHECK(s.f0_hz <= spec.f0_hi_hz);
    CHECK(s.envelope_rate_hz >= 1.5);
    CHECK(s.envelope_rate_hz <= 6.0);
    CHECK(s.n_enroll == spec.n_enroll);
    REQUIRE(s.timbre.size() == static_cast<std::size_t>(spec.n_harmonics));
    double norm = 0.0;
    for (std::size_t h = 0; h < s.timbre.size(); ++h) {
      norm += s.timbre[h] * s.timbre[h];
      if (s.f0_hz * static_cast<double>(h + 1) >= spec.sample_rate / 2.0)
        CHECK(s.timbre[h] == 0.0);
      else
        CHECK(s.timbre[h] > 0.0);
    }
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-12));

    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      const double ratio = std::max(s.f0_hz, pool[j].f0_hz) / std::min(s.f0_hz, pool[j].f0_hz);
      const bool separated =
          ratio >= spec.min_f0_ratio || cos_dist(s.timbre, pool[j].timbre) >= spec.min_timbre_cos_dist;
      CHECK(separated);
      if (ratio < spec.similar_f0_ratio)
        has_similar = true;
      else
        has_dissimilar = true;
    }
  }
  CHECK(has_similar);
  CHECK(has_dissimilar);
}

TEST_CASE("dataset spec json round-trips and rejects bad input") {
  mcx::DatasetSpec spec = tiny_spec();
  const auto j = spec.to_json();
  const auto back = mcx::DatasetSpec::from_json(j);
  CHECK(back.to_json() == j);

  auto bad = j;
  bad["n_harmonix"] = 6;
  CHECK_THROWS_AS(mcx::DatasetSpec::from_json(bad), std::invalid_argument);

  auto invalid = j;
  invalid["n_harmonics"] = 2;
  CHECK_THROWS_AS(mcx::DatasetSpec::from_json(invalid), std::invalid_argument);

  CHECK(mcx::DatasetSpec::from_json(nlohmann::json::object()).n_train == 500);
}

TEST_CASE("dataset builder writes a consistent, reproducible corpus") {
  const mcx::DatasetSpec spec = tiny_spec();
  const fs::path dir_a = fs::temp_directory_path() / "mcx_ds_a";
  const fs::path dir_b = fs::temp_directory_path() / "mcx_ds_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  mcx::build_dataset(spec, dir_a.string());
  mcx::build_dataset(spec, dir_b.string());

  const auto table = mcx::SpeakerTable::load((dir_a / "speakers.json").string());
  REQUIRE(table.speakers.size() == 10);
  CHECK(table.pool("train").size() == 6);
  CHECK(table.pool("eval").size() == 4);
  CHECK_THROWS_AS(table.by_id(999), std::invalid_argument);

  std::set<int> train_ids, eval_ids;
  for (const auto* s : table.pool("train")) train_ids.insert(s->id);
  for (const auto* s : table.pool("eval")) eval_ids.insert(s->id);
  for (int id : eval_ids) CHECK(train_ids.count(id) == 0);

  const auto train = mcx::load_manifest((dir_a / "train_manifest.jsonl").string());
  const auto eval = mcx::load_manifest((dir_a / "eval_manifest.jsonl").string());
  REQUIRE(train.size() == 20);
  REQUIRE(eval.size() == 8);

  std::set<std::string> tags;
  for (const auto* split : {&train, &eval}) {
    const auto& pool_ids = split == &train ? train_ids : eval_ids;
    for (const auto& e : *split) {
      REQUIRE(e.speaker_ids.size() == 2);
      CHECK(e.speaker_ids[0] < e.speaker_ids[1]);
      for (int id : e.speaker_ids) CHECK(pool_ids.count(id) == 1);
      CHECK(e.snr_db >= spec.snr_lo_db);
      CHECK(e.snr_db <= spec.snr_hi_db);
      CHECK(e.reverb_strength >= spec.reverb_lo);
      CHECK(e.reverb_strength <= spec.reverb_hi);
      tags.insert(e.condition_tag);

      const auto& a = table.by_id(e.speaker_ids[0]);
      const auto& b = table.by_id(e.speaker_ids[1]);
      const double ratio = std::max(a.f0_hz, b.f0_hz) / std::min(a.f0_hz, b.f0_hz);
      const std::string want = ratio < spec.similar_f0_ratio ? "similar-pair" : "dissimilar-pair";
      CHECK(e.condition_tag == want);
    }
  }
  CHECK(tags ==
        std::set<std::string>{"similar-pair", "dissimilar-pair"});

  // Audio sanity on the first training example.
  {
    const auto& e = train[0];
    const auto mix = mcx::read_wav((dir_a / e.mixture_path).string());
    CHECK(mix.n_channels() == 2);
    CHECK(mix.n_samples() == 4000);
    CHECK(mix.sample_rate == 8000);
    REQUIRE(e.source_paths.size() == 2);
    REQUIRE(e.clean_paths.size() == 2);

    std::vector<mcx::MultiWaveform> srcs;
    for (const auto& p : e.source_paths) {
      srcs.push_back(mcx::read_wav((dir_a / p).string()));
      CHECK(srcs.back().n_channels() == 2);
      CHECK(srcs.back().n_samples() == 4000);
    }
    for (const auto& p : e.clean_paths) {
      const auto clean = mcx::read_wav((dir_a / p).string());
      CHECK(clean.n_channels() == 1);
      CHECK(clean.n_samples() == 4000);
    }

    // mixture = sources + noise, so the residual must realize the stored SNR.
    double sig_power = 0.0, res_power = 0.0;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t t = 0; t < 4000; ++t) {
        const double s = static_cast<double>(srcs[0].channels[c][t]) + srcs[1].channels[c][t];
        const double r = mix.channels[c][t] - s;
        sig_power += s * s;
        res_power += r * r;
      }
    const double realized = 10.0 * std::log10(sig_power / res_power);
    CHECK(realized == doctest::Approx(e.snr_db).epsilon(1e-3));
  }

  // Byte-identical rebuild: metadata and every audio file.
  for (const char* name : {"speakers.json", "train_manifest.jsonl", "eval_manifest.jsonl"})
    CHECK(slurp((dir_a / name).string()) == slurp((dir_b / name).string()));
  std::size_t n_audio = 0;
  for (const auto& entry : fs::directory_iterator(dir_a / "audio")) {
    const auto rel = entry.path().filename();
    CHECK(slurp(entry.path().string()) == slurp((dir_b / "audio" / rel).string()));
    ++n_audio;
  }
  CHECK(n_audio == (20 + 8) * 5);

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}
