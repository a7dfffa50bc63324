// include/mcx/mixsim.hpp
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

#ifndef MCX_MIXSIM_HPP
#define MCX_MIXSIM_HPP

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "mcx/wav.hpp"

namespace mcx {

// Harmonic toy speaker: fundamental, per-harmonic gains (unit L2), and an
// amplitude-modulation rate. Fully determines its utterances together with a
// per-utterance seed.
struct SyntheticSpeaker {
  int id = 0;
  std::string pool;  // "train" or "eval"
  double f0_hz = 0.0;
  std::vector<double> timbre;
  double envelope_rate_hz = 0.0;
  std::uint64_t utterance_seed_base = 0;
  int n_enroll = 0;

  nlohmann::json to_json() const;
  static SyntheticSpeaker from_json(const nlohmann::json& j);
};

struct SpeakerTable {
  std::vector<SyntheticSpeaker> speakers;

  const SyntheticSpeaker& by_id(int id) const;  // throws if unknown
  std::vector<const SyntheticSpeaker*> pool(const std::string& name) const;
  void save(const std::string& path) const;
  static SpeakerTable load(const std::string& path);
};

struct DatasetSpec {
  int n_train = 500;
  int n_eval = 100;
  int n_train_speakers = 24;
  int n_eval_speakers = 8;
  int speakers_per_mix = 2;
  double duration_s = 2.0;
  int sample_rate = kDefaultSampleRate;
  int n_channels = 2;
  double snr_lo_db = 0.0;
  double snr_hi_db = 10.0;
  double reverb_lo = 0.1;
  double reverb_hi = 0.6;
  int rir_tail_len = 320;
  double f0_lo_hz = 80.0;
  double f0_hi_hz = 400.0;
  int n_harmonics = 6;
  double min_f0_ratio = 1.05;       // pairwise speaker separation rule
  double min_timbre_cos_dist = 0.2;
  double similar_f0_ratio = 1.12;   // below this a pair counts as similar
  double similar_pair_fraction = 0.35;
  int n_enroll = 20;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);  // unknown keys rejected
  void validate() const;
};

// Deterministic utterance synthesis; peak-normalized to 0.9.
Waveform synth_utterance(const SyntheticSpeaker& spk, double duration_s, int sample_rate,
                         std::uint64_t seed);

// Enrollment utterance `index` of a speaker; a pure function of the speaker's
// utterance_seed_base and the index, disjoint from mixture utterances.
Waveform enroll_utterance(const SyntheticSpeaker& spk, double duration_s, int sample_rate,
                          int index);

// Random decaying room impulse response. Per channel: a unit direct tap at a
// random delay of 0..4 samples followed by a Gaussian tail whose amplitude
// scales with reverb_strength and decays as exp(-n/tau), tau = tail_len/8.
// Tail taps are clipped to |t| <= 0.9 so the direct tap stays dominant.
struct Rir {
  std::vector<std::vector<double>> taps;  // per channel
};
Rir make_rir(int n_channels, int tail_len, double reverb_strength, std::uint64_t seed);

// Truncated convolution: y[n] = sum_m taps[m] * src[n-m], n < src length.
std::vector<double> convolve_truncate(const std::vector<double>& src,
                                      const std::vector<double>& taps);

struct MixtureExample {
  std::string id;
  MultiWaveform mixture;
  std::vector<MultiWaveform> reverberant;  // per slot
  std::vector<Waveform> clean;             // per slot, pre-reverb
  MultiWaveform noise;
  std::vector<int> speaker_ids;            // ascending
  double snr_db = 0.0;
  double reverb_strength = 0.0;
  std::string condition_tag;               // "similar-pair" or "dissimilar-pair"
  std::uint64_t seed = 0;
};

// Reverberates each source, sums, and adds white Gaussian noise scaled so the
// realized SNR (summed reverberant signal power over noise power, across all
// channels) equals snr_db. snr_db = +inf disables noise. Sources are mono and
// equal length; errors otherwise.
MixtureExample mix_sources(const std::vector<Waveform>& sources, const std::vector<Rir>& rirs,
                           double snr_db, std::uint64_t noise_seed);

struct ManifestEntry {
  std::string id;
  std::string mixture_path;                // relative to the dataset root
  std::vector<std::string> source_paths;   // reverberant, per slot
  std::vector<std::string> clean_paths;    // per slot
  std::vector<int> speaker_ids;
  double snr_db = 0.0;
  double reverb_strength = 0.0;
  std::string condition_tag;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static ManifestEntry from_json(const nlohmann::json& j);
};

std::vector<ManifestEntry> load_manifest(const std::string& path);

// Samples disjoint speaker pools, synthesizes every mixture, and writes
// speakers.json, train_manifest.jsonl, eval_manifest.jsonl plus float32 WAVs
// under <out_dir>/audio/. Byte-identical across reruns with the same spec.
void build_dataset(const DatasetSpec& spec, const std::string& out_dir);

// Pool sampling is exposed for tests; ids start at id_base and pools are kept
// pairwise separated (f0 ratio or timbre distance), with at least one similar
// pair present.
std::vector<SyntheticSpeaker> sample_speaker_pool(const DatasetSpec& spec,
                                                  const std::string& pool_name, int count,
                                                  int id_base, std::uint64_t seed);

}  // namespace mcx

#endif  // MCX_MIXSIM_HPP
