// include/mcx/speakers.hpp
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

#ifndef MCX_SPEAKERS_HPP
#define MCX_SPEAKERS_HPP

#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "mcx/mixsim.hpp"
#include "mcx/model.hpp"
#include "mcx/wav.hpp"

namespace mcx {

// Sentinel for global_embedding: average over every enrollment utterance.
constexpr int kSelectAll = -1;

struct SpeakerEmbedding {
  int speaker_id = -1;  // -1 when unknown
  std::vector<float> vector;
  int n_utterances_averaged = 1;

  nlohmann::json to_json() const;
  static SpeakerEmbedding from_json(const nlohmann::json& j);
};

struct EnrollmentSet {
  int speaker_id = -1;
  std::vector<Waveform> utterances;  // non-empty, all from speaker_id
};

// Small convolutional utterance encoder: strided input conv, one
// depthwise+pointwise layer, a linear projection, and mean pooling over
// frames. A linear classifier head is attached during training only.
struct EmbedderConfig {
  int embedding_dim = 32;
  int hidden = 48;
  int frame_len = 64;   // input conv kernel (samples)
  int frame_hop = 32;   // input conv stride (samples)
  int window = 1600;    // analysis segment (200 ms at 8 kHz)
  int hop = 80;         // segment hop at inference (10 ms at 8 kHz)
  int n_classes = 0;    // classifier width; 0 = no head
  int sample_rate = kDefaultSampleRate;

  void validate() const;
  nlohmann::json to_json() const;
  static EmbedderConfig from_json(const nlohmann::json& j);
};

std::map<std::string, TensorShape> embedder_shapes(const EmbedderConfig& cfg);
ParamMap<float> init_embedder(const EmbedderConfig& cfg, std::uint64_t seed);

void save_embedder(const std::string& path, const EmbedderConfig& cfg,
                   const ParamMap<float>& params);
std::pair<EmbedderConfig, ParamMap<float>> load_embedder(const std::string& path);

// Unnormalized embedding of one window-length segment (graph piece, exposed
// for training and tests). `frames` is the segment framed at
// frame_len/frame_hop; returns 1 x embedding_dim.
template <typename S>
ad::Var embed_segment(ad::Tape<S>& tape, const std::map<std::string, ad::Var>& params,
                      ad::Var frames);
// Classifier logits for a segment embedding (1 x n_classes).
template <typename S>
ad::Var classify_segment(ad::Tape<S>& tape, const std::map<std::string, ad::Var>& params,
                         ad::Var segment_embedding);

// Splits the utterance into window-length segments at `hop` (remainder
// dropped), encodes each, averages, L2-normalizes. Throws if shorter than one
// window.
SpeakerEmbedding embed_utterance(const EmbedderConfig& cfg, const ParamMap<float>& params,
                                 const Waveform& utt);

// Seeded sampling without replacement of min(n_select, available) utterances
// (kSelectAll takes every one); mean of their embeddings, re-normalized.
SpeakerEmbedding global_embedding(const EmbedderConfig& cfg, const ParamMap<float>& params,
                                  const EnrollmentSet& enroll, int n_select,
                                  std::uint64_t seed);

// Identity-revealing reference embedding: one-hot of speaker_id padded to
// embedding_dim. Bypasses the encoder for isolating extractor tests.
SpeakerEmbedding oracle_embedding(int speaker_id, int embedding_dim);

struct EmbedderTrainOptions {
  double utterance_s = 2.0;
  int epochs = 15;
  int batch_size = 64;
  double lr = 1e-3;
  double holdout_fraction = 0.2;  // utterances per speaker reserved for eval
  int train_hop = 0;              // segment hop while training; 0 = window
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static EmbedderTrainOptions from_json(const nlohmann::json& j);  // unknown keys rejected
};

struct EmbedderTrainResult {
  ParamMap<float> params;
  double held_out_accuracy = 0.0;     // segment classification on held-out utts
  std::vector<double> epoch_losses;   // mean training cross-entropy per epoch
};

// Trains the encoder to classify enrollment segments by speaker. Speakers are
// labeled by their position in the id-sorted list; cfg.n_classes must equal
// the speaker count. Deterministic given the seed.
EmbedderTrainResult train_speaker_encoder(const EmbedderConfig& cfg,
                                          const std::vector<SyntheticSpeaker>& speakers,
                                          const EmbedderTrainOptions& opts);

// Enrollment-utterance synthesis for a table speaker.
EnrollmentSet make_enrollment(const SyntheticSpeaker& spk, double utterance_s, int sample_rate);

// JSON-lines embedding cache.
void save_embedding_cache(const std::string& path, const std::vector<SpeakerEmbedding>& embs);
std::vector<SpeakerEmbedding> load_embedding_cache(const std::string& path);

}  // namespace mcx

#endif  // MCX_SPEAKERS_HPP
