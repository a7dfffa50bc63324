// include/mcx/training.hpp
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

#ifndef MCX_TRAINING_HPP
#define MCX_TRAINING_HPP

#include <cstdint>
#include <json.hpp>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "mcx/config.hpp"
#include "mcx/mixsim.hpp"
#include "mcx/model.hpp"

namespace mcx {

enum class LossMode {
  pit,         // best-permutation negative SI-SNR (works with any conditioning)
  fixed_order  // slot k scored against the slot-k reference (conditioned modes only)
};
std::string to_string(LossMode m);
LossMode loss_mode_from_string(const std::string& s);

struct TrainConfig {
  double lr = 1e-3;
  int batch_size = 8;
  double segment_s = 1.0;
  int max_epochs = 60;
  int patience = 3;             // epochs without val improvement before halving
  double lr_halving_factor = 0.5;
  LossMode loss_mode = LossMode::pit;
  double val_fraction = 0.1;    // mixtures held out for validation, by seed
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);  // unknown keys rejected
};

struct HistoryRow {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;  // rate in effect during this epoch

  bool operator==(const HistoryRow&) const = default;
};

struct TrainState {
  int epoch = 0;  // completed epochs
  double current_lr = 0.0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int epochs_since_improvement = 0;
  std::vector<HistoryRow> history;

  nlohmann::json to_json() const;
  static TrainState from_json(const nlohmann::json& j);
};

// Validation-improvement bookkeeping and the patience rule, applied once per
// epoch with that epoch's validation loss: strict improvement resets the
// counter (and marks a new best); otherwise the counter increments, and on
// reaching `patience` the rate is halved and the counter resets. Returns true
// when this epoch improved on the best.
bool update_schedule(TrainState& state, double val_loss, const TrainConfig& cfg);

// One mixture with its slot-ordered references, fully in memory. Slot order is
// the manifest's speaker_ids order (ascending ids, fixed at simulation time).
struct LoadedExample {
  ManifestEntry meta;
  MultiWaveform mixture;
  std::vector<Waveform> clean;  // per slot, pre-reverb references
};

LoadedExample load_example(const std::string& dataset_dir, const ManifestEntry& entry);
std::vector<LoadedExample> load_dataset(const std::string& dataset_dir,
                                        const std::vector<ManifestEntry>& entries);

// Fixed-length non-overlapping crop of one example; starts are exact
// multiples of the segment length and the tail remainder is dropped.
struct SegmentRef {
  int example = 0;  // index into the examples vector
  int start = 0;    // samples
  int length = 0;   // samples

  bool operator==(const SegmentRef&) const = default;
};

// Throws if any example is shorter than one segment.
std::vector<SegmentRef> segment_dataset(const std::vector<LoadedExample>& examples,
                                        double segment_s);

// Seeded choice of which mixtures to hold out for validation: a shuffled
// prefix of size max(1, round(val_fraction * n)), returned sorted. Throws if
// nothing would be left to train on.
std::vector<int> validation_examples(int n_examples, double val_fraction, std::uint64_t seed);

// speaker_id -> embedding vector (embedding_dim wide).
using EmbeddingMap = std::map<int, std::vector<float>>;

// Slot-ordered embedding vectors for one example: ascending speaker_ids, one
// per model slot (empty for `none` conditioning). Checks presence, dimension,
// and order.
std::vector<std::vector<float>> slot_embeddings(const ManifestEntry& meta,
                                                const EmbeddingMap& embeddings,
                                                const ModelConfig& mcfg);

struct TrainResult {
  ParamMap<float> params;       // after the last epoch
  ParamMap<float> best_params;  // at the best validation loss
  TrainState state;
};

struct TrainIO {
  std::string checkpoint_path;  // saved after every epoch; "" disables
  std::string log_csv_path;     // history as CSV (epoch,train_loss,val_loss,lr); "" disables
  bool resume = false;          // continue from checkpoint_path when it exists
};

// Trains the extractor: seeded val split over mixtures, per-epoch seeded
// shuffle of training segments, batched gradient accumulation in a fixed
// order, global-norm clipping, adaptive-moment updates, patience-based LR
// halving, best-validation checkpointing. Deterministic given the seed; a
// resumed run continues the interrupted trajectory bitwise. Conditioned
// modes read one embedding per slot from `embeddings` (keyed by speaker_id,
// slots in ascending-id order); `none` requires loss_mode = pit and never
// consults the map. Non-finite losses abort with a diagnostic dump.
TrainResult train_extractor(const ModelConfig& mcfg, const TrainConfig& tcfg,
                            const std::vector<LoadedExample>& examples,
                            const EmbeddingMap& embeddings, const TrainIO& io);

// Mean loss of `params` over the given segments (no gradients); the same
// arithmetic the trainer uses for its validation pass.
double dataset_loss(const ModelConfig& mcfg, const ParamMap<float>& params,
                    const std::vector<LoadedExample>& examples,
                    const std::vector<SegmentRef>& segments, const EmbeddingMap& embeddings,
                    LossMode mode);

}  // namespace mcx

#endif  // MCX_TRAINING_HPP
