// include/mcx/evalcli.hpp
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

#ifndef MCX_EVALCLI_HPP
#define MCX_EVALCLI_HPP

#include <cstdint>
#include <json.hpp>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcx/speakers.hpp"
#include "mcx/training.hpp"

namespace mcx {

// Scores of one evaluation mixture. Fixed-order fields are absent for
// unconditioned models, whose slots carry no speaker binding to score against.
struct ExampleScore {
  std::string id;
  std::string condition_tag;
  double sisnri_oracle_perm = 0.0;              // dB, best output-to-reference assignment
  std::optional<double> sisnri_fixed_order;     // dB, slot k scored against reference k
  std::optional<bool> slot_correct;             // oracle assignment is the identity

  nlohmann::json to_json() const;
  static ExampleScore from_json(const nlohmann::json& j);
};

struct ConditionAggregate {
  int n = 0;
  double mean_sisnri_oracle_perm = 0.0;
  std::optional<double> mean_sisnri_fixed_order;
};

struct EvalReport {
  nlohmann::json model_config;
  std::string config_fingerprint;  // hash of the model config
  bool fixed_order_applicable = true;
  std::vector<ExampleScore> per_example;
  double mean_sisnri_oracle_perm = 0.0;
  std::optional<double> mean_sisnri_fixed_order;
  std::optional<double> permutation_agreement_rate;  // fraction with slot_correct
  std::map<std::string, ConditionAggregate> per_condition;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

// Short stable hash of a config document, recorded in reports so a report can
// be matched to the parameters that produced it.
std::string config_fingerprint(const nlohmann::json& config);

// Scores already-computed estimates against one example's references:
// SI-SNRi with mixture channel 0 as the improvement baseline, slot-order and
// best-assignment variants. Estimate count/length must match the references.
ExampleScore score_example(const LoadedExample& ex, const std::vector<Waveform>& estimates,
                           bool fixed_order_applicable);

// Aggregates per-example scores (mean SI-SNRi, per-condition means, agreement
// rate) and stamps the config fingerprint. Empty score lists are rejected.
// Checks the best-assignment-dominates-slot-order invariant on every row.
EvalReport make_report(const ModelConfig& cfg, std::vector<ExampleScore> scores);

// Runs the extractor on every example (full utterances, no segmentation) and
// scores it. Conditioned models read slot embeddings from the map; `none`
// models are scored with the oracle permutation only.
EvalReport evaluate(const ModelConfig& cfg, const ParamMap<float>& params,
                    const std::vector<LoadedExample>& examples, const EmbeddingMap& embeddings);

// Plain-text aggregate table (returned, not printed).
std::string render_text_summary(const EvalReport& report);
// Per-condition mean SI-SNRi bar chart / per-example SI-SNRi histogram as
// standalone SVG documents; byte-deterministic for a given report.
std::string render_condition_bar_svg(const EvalReport& report);
std::string render_sisnri_histogram_svg(const EvalReport& report);
// Writes summary.txt, conditions.svg, histogram.svg into out_dir.
void render_report(const EvalReport& report, const std::string& out_dir);

// How an experiment supplies speaker embeddings.
enum class EmbeddingSource {
  oracle,  // one-hot by speaker id (ids must fit embedding_dim)
  trained  // train the utterance encoder on the train pool, embed enrollments
};
std::string to_string(EmbeddingSource s);
EmbeddingSource embedding_source_from_string(const std::string& s);

struct MatrixCell {
  std::string name;  // report directory and comparison row label
  Conditioning conditioning = Conditioning::split;
  LossMode loss_mode = LossMode::fixed_order;
  std::uint64_t seed = 0;
  int spatial_dim_override = -1;  // >= 0 replaces the base model's spatial_dim

  nlohmann::json to_json() const;
  static MatrixCell from_json(const nlohmann::json& j);
};

struct MatrixSpec {
  DatasetSpec dataset;          // simulated under <out>/data when dataset_dir empty
  std::string dataset_dir;      // pre-built dataset root (optional)
  ModelConfig base_model;
  TrainConfig base_train;
  EmbeddingSource embeddings = EmbeddingSource::trained;
  EmbedderConfig embedder;      // n_classes filled from the train pool
  EmbedderTrainOptions embedder_train;
  int n_select_eval = 3;        // enrollment draws for eval-pool speakers
  // Continue cells from their checkpoints when the output directory already
  // holds them. Only valid when that directory was produced by this same
  // spec; resumed cells finish on the exact trajectory of an uninterrupted
  // run, so the artifacts are byte-identical either way.
  bool resume_cells = false;

  nlohmann::json to_json() const;
  static MatrixSpec from_json(const nlohmann::json& j);

  std::vector<MatrixCell> cells;
};

struct CellResult {
  MatrixCell cell;
  EvalReport report;
};

// Prepares one shared dataset + embedding cache, then trains and evaluates
// every cell (checkpoints, logs, reports, and rendered summaries under
// <out_dir>/cells/<name>), and writes a comparison CSV in the cells' listed
// order. Returns the per-cell reports.
std::vector<CellResult> run_experiment_matrix(const MatrixSpec& spec,
                                              const std::string& out_dir);

// The embedding-cache construction the matrix and the `embed` verb share:
// train-pool speakers average every enrollment utterance, eval-pool speakers
// a seeded n_select subset.
std::vector<SpeakerEmbedding> embed_speaker_table(const EmbedderConfig& cfg,
                                                  const ParamMap<float>& params,
                                                  const SpeakerTable& table,
                                                  double utterance_s, int n_select_eval,
                                                  std::uint64_t seed);

// One-hot cache for every speaker in the table.
std::vector<SpeakerEmbedding> oracle_speaker_table(const SpeakerTable& table,
                                                   int embedding_dim);

// Cache rows -> id-keyed map (duplicate ids rejected).
EmbeddingMap embedding_map_from_cache(const std::vector<SpeakerEmbedding>& cache);

}  // namespace mcx

#endif  // MCX_EVALCLI_HPP
