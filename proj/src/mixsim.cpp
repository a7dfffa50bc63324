// src/mixsim.cpp
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

#include "mcx/mixsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "mcx/rng.hpp"

namespace mcx {
namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kEnvelopeBase = 0.55;
constexpr double kEnvelopeDepth = 0.45;
constexpr double kPeakLevel = 0.9;
constexpr double kRirTailAmp = 0.35;
constexpr double kRirTailClip = 0.9;

double f0_ratio(double a, double b) { return a > b ? a / b : b / a; }

double timbre_cos_dist(const std::vector<double>& a, const std::vector<double>& b) {
  // gains are unit L2 by construction
  double dot = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) dot += a[i] * b[i];
  return 1.0 - dot;
}

std::string zero_pad(int v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", width, v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open for write: " + path);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace

// ---- json -------------------------------------------------------------------

nlohmann::json SyntheticSpeaker::to_json() const {
  return {{"id", id},
          {"pool", pool},
          {"f0_hz", f0_hz},
          {"timbre", timbre},
          {"envelope_rate_hz", envelope_rate_hz},
          {"utterance_seed_base", utterance_seed_base},
          {"n_enroll", n_enroll}};
}

SyntheticSpeaker SyntheticSpeaker::from_json(const nlohmann::json& j) {
  SyntheticSpeaker s;
  s.id = j.at("id").get<int>();
  s.pool = j.at("pool").get<std::string>();
  s.f0_hz = j.at("f0_hz").get<double>();
  s.timbre = j.at("timbre").get<std::vector<double>>();
  s.envelope_rate_hz = j.at("envelope_rate_hz").get<double>();
  s.utterance_seed_base = j.at("utterance_seed_base").get<std::uint64_t>();
  s.n_enroll = j.at("n_enroll").get<int>();
  return s;
}

const SyntheticSpeaker& SpeakerTable::by_id(int id) const {
  for (const auto& s : speakers)
    if (s.id == id) return s;
  throw std::invalid_argument("speaker table: unknown speaker id " + std::to_string(id));
}

std::vector<const SyntheticSpeaker*> SpeakerTable::pool(const std::string& name) const {
  std::vector<const SyntheticSpeaker*> out;
  for (const auto& s : speakers)
    if (s.pool == name) out.push_back(&s);
  return out;
}

void SpeakerTable::save(const std::string& path) const {
  nlohmann::json j;
  j["speakers"] = nlohmann::json::array();
  for (const auto& s : speakers) j["speakers"].push_back(s.to_json());
  write_text_file(path, j.dump(2) + "\n");
}

SpeakerTable SpeakerTable::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open speaker table: " + path);
  nlohmann::json j = nlohmann::json::parse(f);
  SpeakerTable t;
  for (const auto& e : j.at("speakers")) t.speakers.push_back(SyntheticSpeaker::from_json(e));
  return t;
}

nlohmann::json DatasetSpec::to_json() const {
  return {{"n_train", n_train},
          {"n_eval", n_eval},
          {"n_train_speakers", n_train_speakers},
          {"n_eval_speakers", n_eval_speakers},
          {"speakers_per_mix", speakers_per_mix},
          {"duration_s", duration_s},
          {"sample_rate", sample_rate},
          {"n_channels", n_channels},
          {"snr_lo_db", snr_lo_db},
          {"snr_hi_db", snr_hi_db},
          {"reverb_lo", reverb_lo},
          {"reverb_hi", reverb_hi},
          {"rir_tail_len", rir_tail_len},
          {"f0_lo_hz", f0_lo_hz},
          {"f0_hi_hz", f0_hi_hz},
          {"n_harmonics", n_harmonics},
          {"min_f0_ratio", min_f0_ratio},
          {"min_timbre_cos_dist", min_timbre_cos_dist},
          {"similar_f0_ratio", similar_f0_ratio},
          {"similar_pair_fraction", similar_pair_fraction},
          {"n_enroll", n_enroll},
          {"seed", seed}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  DatasetSpec d;
  const nlohmann::json defaults = d.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key))
      throw std::invalid_argument("dataset spec: unknown key '" + key + "'");
    (void)value;
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("n_train", d.n_train);
  get("n_eval", d.n_eval);
  get("n_train_speakers", d.n_train_speakers);
  get("n_eval_speakers", d.n_eval_speakers);
  get("speakers_per_mix", d.speakers_per_mix);
  get("duration_s", d.duration_s);
  get("sample_rate", d.sample_rate);
  get("n_channels", d.n_channels);
  get("snr_lo_db", d.snr_lo_db);
  get("snr_hi_db", d.snr_hi_db);
  get("reverb_lo", d.reverb_lo);
  get("reverb_hi", d.reverb_hi);
  get("rir_tail_len", d.rir_tail_len);
  get("f0_lo_hz", d.f0_lo_hz);
  get("f0_hi_hz", d.f0_hi_hz);
  get("n_harmonics", d.n_harmonics);
  get("min_f0_ratio", d.min_f0_ratio);
  get("min_timbre_cos_dist", d.min_timbre_cos_dist);
  get("similar_f0_ratio", d.similar_f0_ratio);
  get("similar_pair_fraction", d.similar_pair_fraction);
  get("n_enroll", d.n_enroll);
  get("seed", d.seed);
  d.validate();
  return d;
}

void DatasetSpec::validate() const {
  if (n_train < 0 || n_eval < 0) throw std::invalid_argument("dataset spec: negative counts");
  if (speakers_per_mix < 1) throw std::invalid_argument("dataset spec: speakers_per_mix < 1");
  if (n_train_speakers < speakers_per_mix || n_eval_speakers < speakers_per_mix)
    throw std::invalid_argument("dataset spec: pool smaller than speakers_per_mix");
  if (duration_s <= 0 || sample_rate <= 0)
    throw std::invalid_argument("dataset spec: bad duration or rate");
  if (n_channels < 1) throw std::invalid_argument("dataset spec: n_channels < 1");
  if (snr_hi_db < snr_lo_db) throw std::invalid_argument("dataset spec: bad snr range");
  if (reverb_lo < 0 || reverb_hi < reverb_lo)
    throw std::invalid_argument("dataset spec: bad reverb range");
  if (f0_lo_hz <= 0 || f0_hi_hz < f0_lo_hz)
    throw std::invalid_argument("dataset spec: bad f0 range");
  if (n_harmonics < 3) throw std::invalid_argument("dataset spec: n_harmonics < 3");
  if (n_enroll < 2) throw std::invalid_argument("dataset spec: n_enroll < 2");
}

// ---- synthesis ----------------------------------------------------------------

Waveform synth_utterance(const SyntheticSpeaker& spk, double duration_s, int sample_rate,
                         std::uint64_t seed) {
  if (duration_s <= 0 || sample_rate <= 0)
    throw std::invalid_argument("synth_utterance: bad duration or rate");
  if (spk.timbre.empty()) throw std::invalid_argument("synth_utterance: empty timbre");

  const std::size_t T = static_cast<std::size_t>(std::llround(duration_s * sample_rate));
  Rng rng(seed);
  const double env_phase = rng.uniform(0.0, kTwoPi);
  std::vector<double> phases(spk.timbre.size());
  for (auto& p : phases) p = rng.uniform(0.0, kTwoPi);

  std::vector<double> x(T);
  double peak = 0.0;
  const double dt = 1.0 / sample_rate;
  for (std::size_t t = 0; t < T; ++t) {
    const double time = static_cast<double>(t) * dt;
    double harm = 0.0;
    for (std::size_t h = 0; h < spk.timbre.size(); ++h) {
      if (spk.timbre[h] == 0.0) continue;
      harm += spk.timbre[h] *
              std::sin(kTwoPi * spk.f0_hz * static_cast<double>(h + 1) * time + phases[h]);
    }
    const double env =
        kEnvelopeBase + kEnvelopeDepth * std::sin(kTwoPi * spk.envelope_rate_hz * time + env_phase);
    x[t] = env * harm;
    peak = std::max(peak, std::abs(x[t]));
  }
  if (peak <= 0.0) throw std::runtime_error("synth_utterance: silent signal");

  Waveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(T);
  const double gain = kPeakLevel / peak;
  for (std::size_t t = 0; t < T; ++t) w.samples[t] = static_cast<float>(x[t] * gain);
  return w;
}

Waveform enroll_utterance(const SyntheticSpeaker& spk, double duration_s, int sample_rate,
                          int index) {
  if (index < 0) throw std::invalid_argument("enroll_utterance: negative index");
  return synth_utterance(spk, duration_s, sample_rate,
                         derive_seed(spk.utterance_seed_base, "enroll",
                                     static_cast<std::uint64_t>(index)));
}

Rir make_rir(int n_channels, int tail_len, double reverb_strength, std::uint64_t seed) {
  if (n_channels < 1) throw std::invalid_argument("make_rir: n_channels < 1");
  if (tail_len < 1) throw std::invalid_argument("make_rir: tail_len < 1");
  if (reverb_strength < 0) throw std::invalid_argument("make_rir: negative strength");

  Rng rng(seed);
  Rir rir;
  rir.taps.resize(static_cast<std::size_t>(n_channels));
  std::vector<int> delays(static_cast<std::size_t>(n_channels));
  for (auto& d : delays) d = static_cast<int>(rng.below(5));

  const double tau = static_cast<double>(tail_len) / 8.0;
  for (int c = 0; c < n_channels; ++c) {
    auto& taps = rir.taps[static_cast<std::size_t>(c)];
    taps.assign(static_cast<std::size_t>(delays[static_cast<std::size_t>(c)] + tail_len), 0.0);
    taps[static_cast<std::size_t>(delays[static_cast<std::size_t>(c)])] = 1.0;
    for (int n = 1; n < tail_len; ++n) {
      const double g = rng.gaussian();
      double tap = kRirTailAmp * reverb_strength * g * std::exp(-static_cast<double>(n) / tau);
      tap = std::clamp(tap, -kRirTailClip, kRirTailClip);
      taps[static_cast<std::size_t>(delays[static_cast<std::size_t>(c)] + n)] = tap;
    }
  }
  return rir;
}

std::vector<double> convolve_truncate(const std::vector<double>& src,
                                      const std::vector<double>& taps) {
  std::vector<double> y(src.size(), 0.0);
  const std::size_t M = taps.size();
  for (std::size_t m = 0; m < M; ++m) {
    const double h = taps[m];
    if (h == 0.0) continue;
    for (std::size_t n = m; n < src.size(); ++n) y[n] += h * src[n - m];
  }
  return y;
}

MixtureExample mix_sources(const std::vector<Waveform>& sources, const std::vector<Rir>& rirs,
                           double snr_db, std::uint64_t noise_seed) {
  if (sources.empty()) throw std::invalid_argument("mix_sources: no sources");
  if (sources.size() != rirs.size())
    throw std::invalid_argument("mix_sources: source/RIR count mismatch");
  const std::size_t T = sources[0].samples.size();
  const int rate = sources[0].sample_rate;
  if (T == 0) throw std::invalid_argument("mix_sources: empty source");
  for (const auto& s : sources)
    if (s.samples.size() != T || s.sample_rate != rate)
      throw std::invalid_argument("mix_sources: source length/rate mismatch");
  const std::size_t C = rirs[0].taps.size();
  for (const auto& r : rirs)
    if (r.taps.size() != C) throw std::invalid_argument("mix_sources: RIR channel mismatch");

  MixtureExample ex;
  ex.snr_db = snr_db;
  ex.clean = sources;

  // Reverberate and round each part to float32; everything downstream is a
  // function of the stored parts so the additivity invariant is exact.
  for (std::size_t k = 0; k < sources.size(); ++k) {
    std::vector<double> src(T);
    for (std::size_t t = 0; t < T; ++t) src[t] = sources[k].samples[t];
    MultiWaveform rev;
    rev.sample_rate = rate;
    rev.channels.resize(C);
    for (std::size_t c = 0; c < C; ++c) {
      std::vector<double> y = convolve_truncate(src, rirs[k].taps[c]);
      rev.channels[c].resize(T);
      for (std::size_t t = 0; t < T; ++t) rev.channels[c][t] = static_cast<float>(y[t]);
    }
    ex.reverberant.push_back(std::move(rev));
  }

  std::vector<std::vector<double>> sig(C, std::vector<double>(T, 0.0));
  double sig_power = 0.0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < sources.size(); ++k)
        sig[c][t] += ex.reverberant[k].channels[c][t];
      sig_power += sig[c][t] * sig[c][t];
    }
  sig_power /= static_cast<double>(C * T);

  ex.noise.sample_rate = rate;
  ex.noise.channels.assign(C, std::vector<float>(T, 0.0f));
  if (!std::isinf(snr_db)) {
    if (sig_power <= 0.0) throw std::invalid_argument("mix_sources: silent signal");
    Rng rng(noise_seed);
    std::vector<std::vector<double>> raw(C, std::vector<double>(T));
    double raw_power = 0.0;
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t) {
        raw[c][t] = rng.gaussian();
        raw_power += raw[c][t] * raw[c][t];
      }
    raw_power /= static_cast<double>(C * T);
    const double alpha = std::sqrt(sig_power / (raw_power * std::pow(10.0, snr_db / 10.0)));
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t t = 0; t < T; ++t)
        ex.noise.channels[c][t] = static_cast<float>(alpha * raw[c][t]);
  }

  ex.mixture.sample_rate = rate;
  ex.mixture.channels.assign(C, std::vector<float>(T));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t) {
      double acc = ex.noise.channels[c][t];
      for (std::size_t k = 0; k < sources.size(); ++k)
        acc += ex.reverberant[k].channels[c][t];
      ex.mixture.channels[c][t] = static_cast<float>(acc);
    }
  return ex;
}

// ---- manifest -----------------------------------------------------------------

nlohmann::json ManifestEntry::to_json() const {
  return {{"id", id},
          {"mixture_path", mixture_path},
          {"source_paths", source_paths},
          {"clean_paths", clean_paths},
          {"speaker_ids", speaker_ids},
          {"snr_db", snr_db},
          {"reverb_strength", reverb_strength},
          {"condition_tag", condition_tag},
          {"seed", seed}};
}

ManifestEntry ManifestEntry::from_json(const nlohmann::json& j) {
  ManifestEntry e;
  e.id = j.at("id").get<std::string>();
  e.mixture_path = j.at("mixture_path").get<std::string>();
  e.source_paths = j.at("source_paths").get<std::vector<std::string>>();
  e.clean_paths = j.at("clean_paths").get<std::vector<std::string>>();
  e.speaker_ids = j.at("speaker_ids").get<std::vector<int>>();
  e.snr_db = j.at("snr_db").get<double>();
  e.reverb_strength = j.at("reverb_strength").get<double>();
  e.condition_tag = j.at("condition_tag").get<std::string>();
  e.seed = j.at("seed").get<std::uint64_t>();
  return e;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open manifest: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    out.push_back(ManifestEntry::from_json(nlohmann::json::parse(line)));
  }
  return out;
}

// ---- dataset builder ------------------------------------------------------------

std::vector<SyntheticSpeaker> sample_speaker_pool(const DatasetSpec& spec,
                                                  const std::string& pool_name, int count,
                                                  int id_base, std::uint64_t seed) {
  const double ln_lo = std::log(spec.f0_lo_hz), ln_hi = std::log(spec.f0_hi_hz);
  for (int attempt = 0; attempt < 100; ++attempt) {
    Rng rng(derive_seed(seed, "pool", static_cast<std::uint64_t>(attempt)));
    std::vector<SyntheticSpeaker> pool;
    bool failed = false;
    for (int i = 0; i < count && !failed; ++i) {
      bool placed = false;
      for (int draw = 0; draw < 10000; ++draw) {
        SyntheticSpeaker s;
        s.id = id_base + i;
        s.pool = pool_name;
        s.f0_hz = std::exp(rng.uniform(ln_lo, ln_hi));
        s.timbre.resize(static_cast<std::size_t>(spec.n_harmonics));
        double norm = 0.0;
        for (auto& g : s.timbre) g = std::abs(rng.gaussian()) + 0.05;
        for (std::size_t h = 0; h < s.timbre.size(); ++h) {
          if (s.f0_hz * static_cast<double>(h + 1) >= spec.sample_rate / 2.0) s.timbre[h] = 0.0;
          norm += s.timbre[h] * s.timbre[h];
        }
        if (norm <= 0.0) continue;
        for (auto& g : s.timbre) g /= std::sqrt(norm);
        s.envelope_rate_hz = rng.uniform(1.5, 6.0);
        s.n_enroll = spec.n_enroll;
        s.utterance_seed_base = derive_seed(spec.seed, "spk-utt", static_cast<std::uint64_t>(s.id));

        bool separated = true;
        for (const auto& other : pool) {
          if (f0_ratio(s.f0_hz, other.f0_hz) >= spec.min_f0_ratio) continue;
          if (timbre_cos_dist(s.timbre, other.timbre) >= spec.min_timbre_cos_dist) continue;
          separated = false;
          break;
        }
        if (separated) {
          pool.push_back(std::move(s));
          placed = true;
          break;
        }
      }
      if (!placed) failed = true;
    }
    if (failed) continue;

    // Both pair conditions must be drawable from the pool.
    bool has_similar = false, has_dissimilar = false;
    for (std::size_t a = 0; a < pool.size(); ++a)
      for (std::size_t b = a + 1; b < pool.size(); ++b) {
        if (f0_ratio(pool[a].f0_hz, pool[b].f0_hz) < spec.similar_f0_ratio)
          has_similar = true;
        else
          has_dissimilar = true;
      }
    if (has_similar && has_dissimilar) return pool;
  }
  throw std::runtime_error("sample_speaker_pool: could not satisfy pool constraints");
}

namespace {

struct PairPick {
  int a;  // indices into the pool, a != b
  int b;
};

PairPick pick_pair(Rng& rng, const std::vector<SyntheticSpeaker>& pool, bool want_similar,
                   double similar_ratio) {
  PairPick p{0, 1};
  const int P = static_cast<int>(pool.size());
  for (int tries = 0; tries < 500; ++tries) {
    p.a = static_cast<int>(rng.below(static_cast<std::uint64_t>(P)));
    p.b = static_cast<int>(rng.below(static_cast<std::uint64_t>(P - 1)));
    if (p.b >= p.a) ++p.b;
    const bool similar =
        f0_ratio(pool[static_cast<std::size_t>(p.a)].f0_hz,
                 pool[static_cast<std::size_t>(p.b)].f0_hz) < similar_ratio;
    if (similar == want_similar) break;
  }
  return p;
}

}  // namespace

void build_dataset(const DatasetSpec& spec, const std::string& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "audio");

  SpeakerTable table;
  {
    auto train = sample_speaker_pool(spec, "train", spec.n_train_speakers, 0,
                                     derive_seed(spec.seed, "train-pool"));
    auto eval = sample_speaker_pool(spec, "eval", spec.n_eval_speakers, spec.n_train_speakers,
                                    derive_seed(spec.seed, "eval-pool"));
    table.speakers.insert(table.speakers.end(), train.begin(), train.end());
    table.speakers.insert(table.speakers.end(), eval.begin(), eval.end());
  }
  {
    std::set<int> ids;
    for (const auto& s : table.speakers)
      if (!ids.insert(s.id).second)
        throw std::runtime_error("build_dataset: speaker pools are not disjoint");
  }
  table.save((fs::path(out_dir) / "speakers.json").string());

  for (const std::string split : {"train", "eval"}) {
    const bool is_train = split == "train";
    const int n = is_train ? spec.n_train : spec.n_eval;
    std::vector<SyntheticSpeaker> pool;
    for (const auto* s : table.pool(split)) pool.push_back(*s);

    std::string manifest;
    for (int i = 0; i < n; ++i) {
      const std::uint64_t ex_seed =
          derive_seed(spec.seed, is_train ? "train-mix" : "eval-mix", static_cast<std::uint64_t>(i));
      Rng rng(ex_seed);
      const bool want_similar = rng.next_double() < spec.similar_pair_fraction;
      PairPick pick = pick_pair(rng, pool, want_similar, spec.similar_f0_ratio);
      const double strength = rng.uniform(spec.reverb_lo, spec.reverb_hi);
      const double snr = rng.uniform(spec.snr_lo_db, spec.snr_hi_db);

      std::vector<const SyntheticSpeaker*> pair = {&pool[static_cast<std::size_t>(pick.a)],
                                                   &pool[static_cast<std::size_t>(pick.b)]};
      std::sort(pair.begin(), pair.end(),
                [](const SyntheticSpeaker* x, const SyntheticSpeaker* y) { return x->id < y->id; });

      std::vector<Waveform> sources;
      std::vector<Rir> rirs;
      for (std::size_t k = 0; k < pair.size(); ++k) {
        sources.push_back(synth_utterance(*pair[k], spec.duration_s, spec.sample_rate,
                                          derive_seed(ex_seed, "utt", k)));
        rirs.push_back(
            make_rir(spec.n_channels, spec.rir_tail_len, strength, derive_seed(ex_seed, "rir", k)));
      }

      MixtureExample ex = mix_sources(sources, rirs, snr, derive_seed(ex_seed, "noise"));
      ex.id = split + std::string("_") + zero_pad(i, 6);
      ex.reverb_strength = strength;
      for (const auto* s : pair) ex.speaker_ids.push_back(s->id);
      const double ratio = f0_ratio(pair[0]->f0_hz, pair[1]->f0_hz);
      ex.condition_tag = ratio < spec.similar_f0_ratio ? "similar-pair" : "dissimilar-pair";
      ex.seed = ex_seed;

      ManifestEntry entry;
      entry.id = ex.id;
      entry.speaker_ids = ex.speaker_ids;
      entry.snr_db = snr;
      entry.reverb_strength = strength;
      entry.condition_tag = ex.condition_tag;
      entry.seed = ex_seed;
      entry.mixture_path = "audio/" + ex.id + "_mix.wav";
      write_wav((fs::path(out_dir) / entry.mixture_path).string(), ex.mixture,
                WavEncoding::float32);
      for (std::size_t k = 0; k < pair.size(); ++k) {
        entry.source_paths.push_back("audio/" + ex.id + "_src" + std::to_string(k) + ".wav");
        entry.clean_paths.push_back("audio/" + ex.id + "_clean" + std::to_string(k) + ".wav");
        write_wav((fs::path(out_dir) / entry.source_paths[k]).string(), ex.reverberant[k],
                  WavEncoding::float32);
        write_wav((fs::path(out_dir) / entry.clean_paths[k]).string(), ex.clean[k],
                  WavEncoding::float32);
      }
      manifest += entry.to_json().dump();
      manifest += "\n";
    }
    write_text_file((fs::path(out_dir) / (split + std::string("_manifest.jsonl"))).string(),
                    manifest);
  }
}

}  // namespace mcx
