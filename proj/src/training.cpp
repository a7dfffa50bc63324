// src/training.cpp
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

#include "mcx/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "mcx/checkpoint.hpp"
#include "mcx/objectives.hpp"
#include "mcx/optim.hpp"
#include "mcx/rng.hpp"

namespace mcx {

namespace {

MultiWaveform slice_multi(const MultiWaveform& x, int start, int length) {
  MultiWaveform out;
  out.sample_rate = x.sample_rate;
  for (const auto& ch : x.channels)
    out.channels.emplace_back(ch.begin() + start, ch.begin() + start + length);
  return out;
}

Mat<float> reference_column(const Waveform& w, int start, int length) {
  Mat<float> col(length, 1);
  for (int t = 0; t < length; ++t)
    col(t, 0) = w.samples[static_cast<std::size_t>(start + t)];
  return col;
}

// Loss of one segment, shared verbatim between the training loop and the
// validation/measurement passes.
ad::Var segment_loss(ad::Tape<float>& tape, ExtractorGraph<float>& graph,
                     const LoadedExample& ex, const SegmentRef& seg,
                     const std::vector<std::vector<float>>& slot_embs, LossMode mode) {
  const std::vector<ad::Var> ests =
      graph.forward(slice_multi(ex.mixture, seg.start, seg.length), slot_embs);
  std::vector<Mat<float>> refs;
  refs.reserve(ex.clean.size());
  for (const Waveform& c : ex.clean) refs.push_back(reference_column(c, seg.start, seg.length));
  return mode == LossMode::pit ? pit_loss_var(tape, ests, refs)
                               : fixed_order_loss_var(tape, ests, refs);
}

std::vector<std::vector<std::vector<float>>> prepare_slot_embeddings(
    const std::vector<LoadedExample>& examples, const EmbeddingMap& embeddings,
    const ModelConfig& mcfg) {
  std::vector<std::vector<std::vector<float>>> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) out.push_back(slot_embeddings(ex.meta, embeddings, mcfg));
  return out;
}

double checked_mean_loss(const ModelConfig& mcfg, const ParamMap<float>& params,
                         const std::vector<LoadedExample>& examples,
                         const std::vector<SegmentRef>& segments,
                         const std::vector<std::vector<std::vector<float>>>& slot_embs,
                         LossMode mode) {
  if (segments.empty()) throw std::invalid_argument("dataset_loss: no segments");
  double sum = 0.0;
  for (const SegmentRef& seg : segments) {
    ad::Tape<float> tape;
    const auto vars = bind_params(tape, params, mcfg, false);
    ExtractorGraph<float> graph(tape, vars, mcfg);
    const LoadedExample& ex = examples.at(static_cast<std::size_t>(seg.example));
    ad::Var loss = segment_loss(tape, graph, ex, seg,
                                slot_embs.at(static_cast<std::size_t>(seg.example)), mode);
    sum += static_cast<double>(tape.value(loss)(0, 0));
  }
  return sum / static_cast<double>(segments.size());
}

std::string format_csv_double(double x) {
  std::ostringstream ss;
  ss << std::setprecision(17) << x;
  return ss.str();
}

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("train_extractor: cannot open log file " + path);
  out << "epoch,train_loss,val_loss,lr\n";
  for (const HistoryRow& row : history)
    out << row.epoch << "," << format_csv_double(row.train_loss) << ","
        << format_csv_double(row.val_loss) << "," << format_csv_double(row.lr) << "\n";
  if (!out) throw std::runtime_error("train_extractor: write failed: " + path);
}

constexpr const char* kMetaModelConfig = "model_config";
constexpr const char* kMetaTrainConfig = "train_config";
constexpr const char* kMetaTrainState = "train_state";
constexpr const char* kMetaAdamStep = "adam_step";
constexpr const char* kMetaNumExamples = "n_examples";
constexpr const char* kMetaNumTrainSegments = "n_train_segments";

void save_train_checkpoint(const std::string& path, const ModelConfig& mcfg,
                           const TrainConfig& tcfg, const TrainState& state,
                           const ParamMap<float>& params, const ParamMap<float>& best_params,
                           const AdamState& adam, std::size_t n_examples,
                           std::size_t n_train_segments) {
  Checkpoint ck;
  ck.meta[kMetaModelConfig] = mcfg.to_json();
  ck.meta[kMetaTrainConfig] = tcfg.to_json();
  ck.meta[kMetaTrainState] = state.to_json();
  ck.meta[kMetaAdamStep] = adam.step;
  ck.meta[kMetaNumExamples] = n_examples;
  ck.meta[kMetaNumTrainSegments] = n_train_segments;
  ck.sections["params"] = params;
  ck.sections["best_params"] = best_params;
  ck.sections["adam_m"] = adam.m;
  ck.sections["adam_v"] = adam.v;
  save_checkpoint(path, ck);
}

}  // namespace

std::string to_string(LossMode m) {
  switch (m) {
    case LossMode::pit: return "pit";
    case LossMode::fixed_order: return "fixed_order";
  }
  throw std::logic_error("unreachable");
}

LossMode loss_mode_from_string(const std::string& s) {
  if (s == "pit") return LossMode::pit;
  if (s == "fixed_order") return LossMode::fixed_order;
  throw std::invalid_argument("unknown loss mode '" + s + "'");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("train config: ") + what);
  };
  require(lr > 0.0, "lr must be positive");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(segment_s > 0.0, "segment_s must be positive");
  require(max_epochs >= 0, "max_epochs must be >= 0");
  require(patience >= 1, "patience must be >= 1");
  require(lr_halving_factor > 0.0 && lr_halving_factor < 1.0,
          "lr_halving_factor must be in (0, 1)");
  require(val_fraction > 0.0 && val_fraction < 1.0, "val_fraction must be in (0, 1)");
  require(grad_clip_norm > 0.0, "grad_clip_norm must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"batch_size", batch_size},
          {"segment_s", segment_s},
          {"max_epochs", max_epochs},
          {"patience", patience},
          {"lr_halving_factor", lr_halving_factor},
          {"loss_mode", to_string(loss_mode)},
          {"val_fraction", val_fraction},
          {"grad_clip_norm", grad_clip_norm},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  const nlohmann::json defaults = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key))
      throw std::invalid_argument("train config: unknown key '" + key + "'");
    (void)value;
  }
  auto get_d = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  auto get_i = [&](const char* key, int& field) {
    if (j.contains(key)) field = j.at(key).get<int>();
  };
  get_d("lr", c.lr);
  get_i("batch_size", c.batch_size);
  get_d("segment_s", c.segment_s);
  get_i("max_epochs", c.max_epochs);
  get_i("patience", c.patience);
  get_d("lr_halving_factor", c.lr_halving_factor);
  get_d("val_fraction", c.val_fraction);
  get_d("grad_clip_norm", c.grad_clip_norm);
  if (j.contains("loss_mode"))
    c.loss_mode = loss_mode_from_string(j.at("loss_mode").get<std::string>());
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

nlohmann::json TrainState::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const HistoryRow& r : history)
    rows.push_back({{"epoch", r.epoch},
                    {"train_loss", r.train_loss},
                    {"val_loss", r.val_loss},
                    {"lr", r.lr}});
  nlohmann::json j = {{"epoch", epoch},
                      {"current_lr", current_lr},
                      {"epochs_since_improvement", epochs_since_improvement},
                      {"history", rows}};
  // JSON has no infinity literal; an absent key marks "no validation seen".
  if (std::isfinite(best_val_loss)) j["best_val_loss"] = best_val_loss;
  return j;
}

TrainState TrainState::from_json(const nlohmann::json& j) {
  TrainState s;
  s.epoch = j.at("epoch").get<int>();
  s.current_lr = j.at("current_lr").get<double>();
  s.epochs_since_improvement = j.at("epochs_since_improvement").get<int>();
  if (j.contains("best_val_loss")) s.best_val_loss = j.at("best_val_loss").get<double>();
  for (const auto& r : j.at("history")) {
    HistoryRow row;
    row.epoch = r.at("epoch").get<int>();
    row.train_loss = r.at("train_loss").get<double>();
    row.val_loss = r.at("val_loss").get<double>();
    row.lr = r.at("lr").get<double>();
    s.history.push_back(row);
  }
  return s;
}

bool update_schedule(TrainState& state, double val_loss, const TrainConfig& cfg) {
  if (!std::isfinite(val_loss))
    throw std::invalid_argument("update_schedule: non-finite validation loss");
  const bool improved = val_loss < state.best_val_loss;
  if (improved) {
    state.best_val_loss = val_loss;
    state.epochs_since_improvement = 0;
  } else {
    state.epochs_since_improvement += 1;
    if (state.epochs_since_improvement >= cfg.patience) {
      state.current_lr *= cfg.lr_halving_factor;
      state.epochs_since_improvement = 0;
    }
  }
  return improved;
}

LoadedExample load_example(const std::string& dataset_dir, const ManifestEntry& entry) {
  namespace fs = std::filesystem;
  LoadedExample ex;
  ex.meta = entry;
  ex.mixture = read_wav((fs::path(dataset_dir) / entry.mixture_path).string());
  if (entry.clean_paths.size() != entry.speaker_ids.size())
    throw std::runtime_error("load_example: clean/speaker count mismatch in " + entry.id);
  for (std::size_t i = 1; i < entry.speaker_ids.size(); ++i)
    if (entry.speaker_ids[i] <= entry.speaker_ids[i - 1])
      throw std::runtime_error("load_example: speaker ids not ascending in " + entry.id);
  for (const std::string& rel : entry.clean_paths) {
    const MultiWaveform w = read_wav((fs::path(dataset_dir) / rel).string());
    if (w.n_channels() != 1)
      throw std::runtime_error("load_example: reference must be mono: " + rel);
    if (w.n_samples() != ex.mixture.n_samples() || w.sample_rate != ex.mixture.sample_rate)
      throw std::runtime_error("load_example: reference/mixture layout mismatch: " + rel);
    ex.clean.push_back(w.channel(0));
  }
  return ex;
}

std::vector<LoadedExample> load_dataset(const std::string& dataset_dir,
                                        const std::vector<ManifestEntry>& entries) {
  std::vector<LoadedExample> out;
  out.reserve(entries.size());
  for (const ManifestEntry& e : entries) out.push_back(load_example(dataset_dir, e));
  return out;
}

std::vector<SegmentRef> segment_dataset(const std::vector<LoadedExample>& examples,
                                        double segment_s) {
  if (!(segment_s > 0.0)) throw std::invalid_argument("segment_dataset: segment_s must be > 0");
  std::vector<SegmentRef> segments;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    const int seg_len = static_cast<int>(std::lround(segment_s * ex.mixture.sample_rate));
    const int n = static_cast<int>(ex.mixture.n_samples());
    if (seg_len < 1 || n < seg_len)
      throw std::invalid_argument("segment_dataset: segment longer than example " + ex.meta.id);
    for (int start = 0; start + seg_len <= n; start += seg_len)
      segments.push_back({static_cast<int>(i), start, seg_len});
  }
  return segments;
}

std::vector<int> validation_examples(int n_examples, double val_fraction, std::uint64_t seed) {
  if (n_examples < 2)
    throw std::invalid_argument("validation_examples: need at least two mixtures");
  if (!(val_fraction > 0.0 && val_fraction < 1.0))
    throw std::invalid_argument("validation_examples: val_fraction must be in (0, 1)");
  const int n_val =
      std::max(1, static_cast<int>(std::lround(val_fraction * n_examples)));
  if (n_val >= n_examples)
    throw std::invalid_argument("validation_examples: split leaves no training data");
  std::vector<int> order(static_cast<std::size_t>(n_examples));
  for (int i = 0; i < n_examples; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(derive_seed(seed, "val-split"));
  fisher_yates(order, rng);
  order.resize(static_cast<std::size_t>(n_val));
  std::sort(order.begin(), order.end());
  return order;
}

std::vector<std::vector<float>> slot_embeddings(const ManifestEntry& meta,
                                                const EmbeddingMap& embeddings,
                                                const ModelConfig& mcfg) {
  if (static_cast<int>(meta.speaker_ids.size()) != mcfg.max_speakers)
    throw std::invalid_argument("slot_embeddings: example " + meta.id + " has " +
                                std::to_string(meta.speaker_ids.size()) +
                                " speakers but the model has " +
                                std::to_string(mcfg.max_speakers) + " slots");
  if (mcfg.conditioning == Conditioning::none) return {};
  std::vector<std::vector<float>> out;
  for (std::size_t i = 0; i < meta.speaker_ids.size(); ++i) {
    if (i > 0 && meta.speaker_ids[i] <= meta.speaker_ids[i - 1])
      throw std::invalid_argument("slot_embeddings: speaker ids not ascending in " + meta.id);
    auto it = embeddings.find(meta.speaker_ids[i]);
    if (it == embeddings.end())
      throw std::invalid_argument("slot_embeddings: no embedding for speaker " +
                                  std::to_string(meta.speaker_ids[i]));
    if (static_cast<int>(it->second.size()) != mcfg.embedding_dim)
      throw std::invalid_argument("slot_embeddings: embedding dim mismatch for speaker " +
                                  std::to_string(meta.speaker_ids[i]));
    out.push_back(it->second);
  }
  return out;
}

TrainResult train_extractor(const ModelConfig& mcfg, const TrainConfig& tcfg,
                            const std::vector<LoadedExample>& examples,
                            const EmbeddingMap& embeddings, const TrainIO& io) {
  mcfg.validate();
  tcfg.validate();
  if (tcfg.loss_mode == LossMode::fixed_order && mcfg.conditioning == Conditioning::none)
    throw std::invalid_argument(
        "train_extractor: fixed_order loss requires a conditioned model");
  if (examples.size() < 2)
    throw std::invalid_argument("train_extractor: need at least two mixtures");

  const auto slot_embs = prepare_slot_embeddings(examples, embeddings, mcfg);
  const std::vector<SegmentRef> all_segments = segment_dataset(examples, tcfg.segment_s);

  // Seeded validation split over whole mixtures.
  const int n_examples = static_cast<int>(examples.size());
  const std::vector<int> val_indices =
      validation_examples(n_examples, tcfg.val_fraction, tcfg.seed);
  std::vector<bool> is_val(static_cast<std::size_t>(n_examples), false);
  for (int i : val_indices) is_val[static_cast<std::size_t>(i)] = true;

  std::vector<SegmentRef> train_segments, val_segments;
  for (const SegmentRef& s : all_segments)
    (is_val[static_cast<std::size_t>(s.example)] ? val_segments : train_segments).push_back(s);

  TrainResult result;
  AdamState adam;
  if (io.resume && !io.checkpoint_path.empty() &&
      std::filesystem::exists(io.checkpoint_path)) {
    Checkpoint ck = load_checkpoint(io.checkpoint_path);
    // max_epochs may grow between legs (that is what resuming is for); every
    // other knob changes the trajectory and must match.
    nlohmann::json stored_tcfg = ck.meta.at(kMetaTrainConfig);
    nlohmann::json current_tcfg = tcfg.to_json();
    stored_tcfg.erase("max_epochs");
    current_tcfg.erase("max_epochs");
    if (ck.meta.at(kMetaModelConfig) != mcfg.to_json() || stored_tcfg != current_tcfg)
      throw std::runtime_error("train_extractor: checkpoint config mismatch: " +
                               io.checkpoint_path);
    if (ck.meta.at(kMetaNumExamples).get<std::size_t>() != examples.size() ||
        ck.meta.at(kMetaNumTrainSegments).get<std::size_t>() != train_segments.size())
      throw std::runtime_error("train_extractor: checkpoint dataset mismatch: " +
                               io.checkpoint_path);
    result.params = std::move(ck.sections.at("params"));
    result.best_params = std::move(ck.sections.at("best_params"));
    adam.m = std::move(ck.sections.at("adam_m"));
    adam.v = std::move(ck.sections.at("adam_v"));
    adam.step = ck.meta.at(kMetaAdamStep).get<std::int64_t>();
    result.state = TrainState::from_json(ck.meta.at(kMetaTrainState));
  } else {
    result.params = init_params(mcfg, derive_seed(tcfg.seed, "init"));
    result.best_params = result.params;
    adam = init_adam(result.params);
    result.state.current_lr = tcfg.lr;
  }
  TrainState& state = result.state;

  for (int epoch = state.epoch + 1; epoch <= tcfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order(train_segments.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(derive_seed(tcfg.seed, "epoch-shuffle", static_cast<std::uint64_t>(epoch)));
    fisher_yates(order, shuffle_rng);

    const double lr_used = state.current_lr;
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), begin + static_cast<std::size_t>(tcfg.batch_size));
      const float inv_batch = 1.0f / static_cast<float>(end - begin);
      ParamMap<float> grad_acc = zeros_like(result.params);
      for (std::size_t k = begin; k < end; ++k) {
        const SegmentRef& seg = train_segments[order[k]];
        ad::Tape<float> tape;
        const auto vars = bind_params(tape, result.params, mcfg, true);
        ExtractorGraph<float> graph(tape, vars, mcfg);
        const LoadedExample& ex = examples[static_cast<std::size_t>(seg.example)];
        ad::Var loss = segment_loss(tape, graph, ex, seg,
                                    slot_embs[static_cast<std::size_t>(seg.example)],
                                    tcfg.loss_mode);
        tape.backward(loss);
        const double loss_value = tape.value(loss)(0, 0);
        if (!std::isfinite(loss_value)) {
          if (!io.checkpoint_path.empty())
            save_train_checkpoint(io.checkpoint_path + ".diag", mcfg, tcfg, state,
                                  result.params, result.best_params, adam, examples.size(),
                                  train_segments.size());
          throw std::runtime_error(
              "train_extractor: non-finite loss (" + std::to_string(loss_value) + ") at epoch " +
              std::to_string(epoch) + ", example " + ex.meta.id + ", segment start " +
              std::to_string(seg.start) + ", lr " + std::to_string(lr_used) +
              (io.checkpoint_path.empty() ? "" : "; state dumped to " + io.checkpoint_path +
                                                     ".diag"));
        }
        loss_sum += loss_value;
        ParamMap<float> grads;
        for (const auto& [name, var] : vars) grads.emplace(name, tape.grad(var));
        axpy(grad_acc, grads, inv_batch);
      }
      clip_global_norm(grad_acc, tcfg.grad_clip_norm);
      AdamConfig adam_cfg;
      adam_cfg.lr = state.current_lr;
      adam_step(result.params, grad_acc, adam, adam_cfg);
    }
    const double train_loss = loss_sum / static_cast<double>(train_segments.size());

    const double val_loss = checked_mean_loss(mcfg, result.params, examples, val_segments,
                                              slot_embs, tcfg.loss_mode);
    if (update_schedule(state, val_loss, tcfg)) result.best_params = result.params;
    state.epoch = epoch;
    state.history.push_back({epoch, train_loss, val_loss, lr_used});

    if (!io.checkpoint_path.empty())
      save_train_checkpoint(io.checkpoint_path, mcfg, tcfg, state, result.params,
                            result.best_params, adam, examples.size(), train_segments.size());
    if (!io.log_csv_path.empty()) write_history_csv(io.log_csv_path, state.history);
  }

  if (!io.log_csv_path.empty()) write_history_csv(io.log_csv_path, state.history);
  return result;
}

double dataset_loss(const ModelConfig& mcfg, const ParamMap<float>& params,
                    const std::vector<LoadedExample>& examples,
                    const std::vector<SegmentRef>& segments, const EmbeddingMap& embeddings,
                    LossMode mode) {
  mcfg.validate();
  if (mode == LossMode::fixed_order && mcfg.conditioning == Conditioning::none)
    throw std::invalid_argument("dataset_loss: fixed_order loss requires a conditioned model");
  const auto slot_embs = prepare_slot_embeddings(examples, embeddings, mcfg);
  return checked_mean_loss(mcfg, params, examples, segments, slot_embs, mode);
}

}  // namespace mcx
