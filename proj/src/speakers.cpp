// src/speakers.cpp
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

#include "mcx/speakers.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mcx/checkpoint.hpp"
#include "mcx/optim.hpp"
#include "mcx/rng.hpp"

namespace mcx {

namespace {

template <typename S>
std::map<std::string, ad::Var> bind_embedder(ad::Tape<S>& tape, const ParamMap<S>& params,
                                             const EmbedderConfig& cfg, bool needs_grad) {
  const auto shapes = embedder_shapes(cfg);
  std::map<std::string, ad::Var> vars;
  for (const auto& [name, shape] : shapes) {
    auto it = params.find(name);
    if (it == params.end())
      throw std::invalid_argument("bind_embedder: missing tensor '" + name + "'");
    if (it->second.rows() != shape.rows || it->second.cols() != shape.cols)
      throw std::invalid_argument("bind_embedder: shape mismatch for '" + name + "'");
    vars.emplace(name, tape.leaf(it->second, needs_grad));
  }
  if (params.size() != shapes.size())
    throw std::invalid_argument("bind_embedder: unexpected extra tensors");
  return vars;
}

// Window start offsets covering the utterance; the tail shorter than one
// window is dropped.
std::vector<int> segment_starts(int n_samples, int window, int hop) {
  std::vector<int> starts;
  for (int s = 0; s + window <= n_samples; s += hop) starts.push_back(s);
  return starts;
}

Mat<float> segment_frames(const std::vector<float>& samples, int start,
                          const EmbedderConfig& cfg) {
  std::vector<float> seg(samples.begin() + start, samples.begin() + start + cfg.window);
  return frame_rows<float>(seg, cfg.frame_len, cfg.frame_hop);
}

// Mean of per-utterance embeddings, re-normalized to unit length. Zero stays
// zero (no direction to scale).
std::vector<float> normalize(std::vector<double> acc) {
  double norm_sq = 0.0;
  for (double x : acc) norm_sq += x * x;
  const double norm = std::sqrt(norm_sq);
  std::vector<float> out(acc.size());
  for (std::size_t i = 0; i < acc.size(); ++i)
    out[i] = static_cast<float>(norm > 0.0 ? acc[i] / norm : 0.0);
  return out;
}

}  // namespace

nlohmann::json SpeakerEmbedding::to_json() const {
  return {{"speaker_id", speaker_id},
          {"vector", vector},
          {"n_utterances_averaged", n_utterances_averaged}};
}

SpeakerEmbedding SpeakerEmbedding::from_json(const nlohmann::json& j) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (key != "speaker_id" && key != "vector" && key != "n_utterances_averaged")
      throw std::invalid_argument("speaker embedding: unknown key '" + key + "'");
  }
  SpeakerEmbedding e;
  e.speaker_id = j.at("speaker_id").get<int>();
  e.vector = j.at("vector").get<std::vector<float>>();
  e.n_utterances_averaged = j.at("n_utterances_averaged").get<int>();
  if (e.vector.empty()) throw std::invalid_argument("speaker embedding: empty vector");
  if (e.n_utterances_averaged < 1)
    throw std::invalid_argument("speaker embedding: n_utterances_averaged must be >= 1");
  return e;
}

void EmbedderConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("embedder config: ") + what);
  };
  require(embedding_dim >= 1, "embedding_dim must be >= 1");
  require(hidden >= 1, "hidden must be >= 1");
  require(frame_len >= 1, "frame_len must be >= 1");
  require(frame_hop >= 1 && frame_hop <= frame_len, "frame_hop must be in [1, frame_len]");
  require(window >= frame_len, "window must be >= frame_len");
  require(hop >= 1, "hop must be >= 1");
  require(n_classes >= 0, "n_classes must be >= 0");
  require(sample_rate >= 1, "sample_rate must be >= 1");
}

nlohmann::json EmbedderConfig::to_json() const {
  return {{"embedding_dim", embedding_dim},
          {"hidden", hidden},
          {"frame_len", frame_len},
          {"frame_hop", frame_hop},
          {"window", window},
          {"hop", hop},
          {"n_classes", n_classes},
          {"sample_rate", sample_rate}};
}

EmbedderConfig EmbedderConfig::from_json(const nlohmann::json& j) {
  EmbedderConfig c;
  const nlohmann::json defaults = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key))
      throw std::invalid_argument("embedder config: unknown key '" + key + "'");
    (void)value;
  }
  auto get = [&](const char* key, int& field) {
    if (j.contains(key)) field = j.at(key).get<int>();
  };
  get("embedding_dim", c.embedding_dim);
  get("hidden", c.hidden);
  get("frame_len", c.frame_len);
  get("frame_hop", c.frame_hop);
  get("window", c.window);
  get("hop", c.hop);
  get("n_classes", c.n_classes);
  get("sample_rate", c.sample_rate);
  c.validate();
  return c;
}

std::map<std::string, TensorShape> embedder_shapes(const EmbedderConfig& cfg) {
  cfg.validate();
  std::map<std::string, TensorShape> shapes;
  shapes["emb.conv1.w"] = {cfg.frame_len, cfg.hidden};
  shapes["emb.dw.w"] = {3, cfg.hidden};
  shapes["emb.pw.w"] = {cfg.hidden, cfg.hidden};
  shapes["emb.proj.w"] = {cfg.hidden, cfg.embedding_dim};
  if (cfg.n_classes > 0) {
    shapes["emb.cls.w"] = {cfg.embedding_dim, cfg.n_classes};
    shapes["emb.cls.b"] = {1, cfg.n_classes};
  }
  return shapes;
}

ParamMap<float> init_embedder(const EmbedderConfig& cfg, std::uint64_t seed) {
  return init_from_shapes(embedder_shapes(cfg), seed);
}

void save_embedder(const std::string& path, const EmbedderConfig& cfg,
                   const ParamMap<float>& params) {
  const auto shapes = embedder_shapes(cfg);
  for (const auto& [name, shape] : shapes) {
    auto it = params.find(name);
    if (it == params.end())
      throw std::runtime_error("save_embedder: missing tensor '" + name + "'");
    if (it->second.rows() != shape.rows || it->second.cols() != shape.cols)
      throw std::runtime_error("save_embedder: shape mismatch for '" + name + "'");
  }
  if (params.size() != shapes.size())
    throw std::runtime_error("save_embedder: unexpected extra tensors");
  Checkpoint ck;
  ck.meta["embedder_config"] = cfg.to_json();
  ck.sections["params"] = params;
  save_checkpoint(path, ck);
}

std::pair<EmbedderConfig, ParamMap<float>> load_embedder(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (!ck.meta.contains("embedder_config"))
    throw std::runtime_error("load_embedder: checkpoint has no embedder config: " + path);
  const EmbedderConfig cfg = EmbedderConfig::from_json(ck.meta.at("embedder_config"));
  auto it = ck.sections.find("params");
  if (it == ck.sections.end())
    throw std::runtime_error("load_embedder: checkpoint has no params section: " + path);
  const auto shapes = embedder_shapes(cfg);
  for (const auto& [name, shape] : shapes) {
    auto pit = it->second.find(name);
    if (pit == it->second.end())
      throw std::runtime_error("load_embedder: missing tensor '" + name + "'");
    if (pit->second.rows() != shape.rows || pit->second.cols() != shape.cols)
      throw std::runtime_error("load_embedder: shape mismatch for '" + name + "'");
  }
  if (it->second.size() != shapes.size())
    throw std::runtime_error("load_embedder: unexpected extra tensors");
  return {cfg, std::move(it->second)};
}

template <typename S>
ad::Var embed_segment(ad::Tape<S>& tape, const std::map<std::string, ad::Var>& params,
                      ad::Var frames) {
  ad::Var h = tape.relu(tape.matmul(frames, params.at("emb.conv1.w")));
  h = tape.relu(tape.matmul(tape.depthwise3(h, params.at("emb.dw.w"), 1),
                            params.at("emb.pw.w")));
  return tape.col_mean(tape.matmul(h, params.at("emb.proj.w")));
}

template <typename S>
ad::Var classify_segment(ad::Tape<S>& tape, const std::map<std::string, ad::Var>& params,
                         ad::Var segment_embedding) {
  return tape.add_row_vec(tape.matmul(segment_embedding, params.at("emb.cls.w")),
                          params.at("emb.cls.b"));
}

template ad::Var embed_segment<float>(ad::Tape<float>&, const std::map<std::string, ad::Var>&,
                                      ad::Var);
template ad::Var embed_segment<double>(ad::Tape<double>&, const std::map<std::string, ad::Var>&,
                                       ad::Var);
template ad::Var classify_segment<float>(ad::Tape<float>&,
                                         const std::map<std::string, ad::Var>&, ad::Var);
template ad::Var classify_segment<double>(ad::Tape<double>&,
                                          const std::map<std::string, ad::Var>&, ad::Var);

SpeakerEmbedding embed_utterance(const EmbedderConfig& cfg, const ParamMap<float>& params,
                                 const Waveform& utt) {
  cfg.validate();
  if (utt.sample_rate != cfg.sample_rate)
    throw std::invalid_argument("embed_utterance: sample rate mismatch");
  const int n = static_cast<int>(utt.samples.size());
  if (n < cfg.window)
    throw std::invalid_argument("embed_utterance: utterance shorter than one window");

  const auto starts = segment_starts(n, cfg.window, cfg.hop);
  ad::Tape<float> tape;
  const auto vars = bind_embedder(tape, params, cfg, false);
  std::vector<double> acc(static_cast<std::size_t>(cfg.embedding_dim), 0.0);
  for (int s : starts) {
    ad::Var e = embed_segment(tape, vars, tape.constant(segment_frames(utt.samples, s, cfg)));
    const Mat<float>& row = tape.value(e);
    for (int d = 0; d < cfg.embedding_dim; ++d) acc[static_cast<std::size_t>(d)] += row(0, d);
  }
  for (double& x : acc) x /= static_cast<double>(starts.size());

  SpeakerEmbedding out;
  out.vector = normalize(std::move(acc));
  out.n_utterances_averaged = 1;
  return out;
}

SpeakerEmbedding global_embedding(const EmbedderConfig& cfg, const ParamMap<float>& params,
                                  const EnrollmentSet& enroll, int n_select,
                                  std::uint64_t seed) {
  if (enroll.utterances.empty())
    throw std::invalid_argument("global_embedding: no enrollment utterances");
  if (n_select != kSelectAll && n_select < 1)
    throw std::invalid_argument("global_embedding: n_select must be positive or select-all");

  const int n = static_cast<int>(enroll.utterances.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(derive_seed(seed, "enroll-select"));
  fisher_yates(order, rng);
  const int take = n_select == kSelectAll ? n : std::min(n_select, n);

  std::vector<double> acc(static_cast<std::size_t>(cfg.embedding_dim), 0.0);
  for (int i = 0; i < take; ++i) {
    const SpeakerEmbedding e =
        embed_utterance(cfg, params, enroll.utterances[static_cast<std::size_t>(order[i])]);
    for (int d = 0; d < cfg.embedding_dim; ++d)
      acc[static_cast<std::size_t>(d)] += static_cast<double>(e.vector[static_cast<std::size_t>(d)]);
  }
  for (double& x : acc) x /= static_cast<double>(take);

  SpeakerEmbedding out;
  out.speaker_id = enroll.speaker_id;
  out.vector = normalize(std::move(acc));
  out.n_utterances_averaged = take;
  return out;
}

SpeakerEmbedding oracle_embedding(int speaker_id, int embedding_dim) {
  if (embedding_dim < 1)
    throw std::invalid_argument("oracle_embedding: embedding_dim must be >= 1");
  if (speaker_id < 0 || speaker_id >= embedding_dim)
    throw std::invalid_argument("oracle_embedding: speaker_id out of range for one-hot");
  SpeakerEmbedding out;
  out.speaker_id = speaker_id;
  out.vector.assign(static_cast<std::size_t>(embedding_dim), 0.0f);
  out.vector[static_cast<std::size_t>(speaker_id)] = 1.0f;
  out.n_utterances_averaged = 1;
  return out;
}

EnrollmentSet make_enrollment(const SyntheticSpeaker& spk, double utterance_s, int sample_rate) {
  if (spk.n_enroll < 1)
    throw std::invalid_argument("make_enrollment: speaker has no enrollment budget");
  EnrollmentSet set;
  set.speaker_id = spk.id;
  for (int i = 0; i < spk.n_enroll; ++i)
    set.utterances.push_back(enroll_utterance(spk, utterance_s, sample_rate, i));
  return set;
}

void save_embedding_cache(const std::string& path, const std::vector<SpeakerEmbedding>& embs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_embedding_cache: cannot open " + path);
  for (const auto& e : embs) out << e.to_json().dump() << "\n";
  if (!out) throw std::runtime_error("save_embedding_cache: write failed: " + path);
}

std::vector<SpeakerEmbedding> load_embedding_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_embedding_cache: cannot open " + path);
  std::vector<SpeakerEmbedding> embs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_embedding_cache: " + path + " line " +
                               std::to_string(line_no) + ": " + e.what());
    }
    embs.push_back(SpeakerEmbedding::from_json(j));
  }
  return embs;
}

nlohmann::json EmbedderTrainOptions::to_json() const {
  return {{"utterance_s", utterance_s}, {"epochs", epochs},
          {"batch_size", batch_size},   {"lr", lr},
          {"holdout_fraction", holdout_fraction}, {"train_hop", train_hop},
          {"seed", seed}};
}

EmbedderTrainOptions EmbedderTrainOptions::from_json(const nlohmann::json& j) {
  EmbedderTrainOptions o;
  const nlohmann::json defaults = o.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key))
      throw std::invalid_argument("embedder train options: unknown key '" + key + "'");
    (void)value;
  }
  if (j.contains("utterance_s")) o.utterance_s = j.at("utterance_s").get<double>();
  if (j.contains("epochs")) o.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_size")) o.batch_size = j.at("batch_size").get<int>();
  if (j.contains("lr")) o.lr = j.at("lr").get<double>();
  if (j.contains("holdout_fraction"))
    o.holdout_fraction = j.at("holdout_fraction").get<double>();
  if (j.contains("train_hop")) o.train_hop = j.at("train_hop").get<int>();
  if (j.contains("seed")) o.seed = j.at("seed").get<std::uint64_t>();
  return o;
}

EmbedderTrainResult train_speaker_encoder(const EmbedderConfig& cfg,
                                          const std::vector<SyntheticSpeaker>& speakers,
                                          const EmbedderTrainOptions& opts) {
  cfg.validate();
  if (static_cast<int>(speakers.size()) < 2)
    throw std::invalid_argument("train_speaker_encoder: need at least two speakers");
  if (cfg.n_classes != static_cast<int>(speakers.size()))
    throw std::invalid_argument("train_speaker_encoder: n_classes must equal speaker count");
  if (opts.epochs < 1) throw std::invalid_argument("train_speaker_encoder: epochs must be >= 1");
  if (opts.batch_size < 1)
    throw std::invalid_argument("train_speaker_encoder: batch_size must be >= 1");
  if (!(opts.lr > 0.0)) throw std::invalid_argument("train_speaker_encoder: lr must be positive");
  if (!(opts.holdout_fraction >= 0.0 && opts.holdout_fraction < 1.0))
    throw std::invalid_argument("train_speaker_encoder: holdout_fraction must be in [0, 1)");
  if (opts.train_hop < 0)
    throw std::invalid_argument("train_speaker_encoder: train_hop must be >= 0");

  // Labels follow the id-sorted speaker order so they are independent of the
  // caller's list order.
  std::vector<const SyntheticSpeaker*> sorted;
  for (const auto& s : speakers) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(),
            [](const SyntheticSpeaker* a, const SyntheticSpeaker* b) { return a->id < b->id; });
  for (std::size_t i = 1; i < sorted.size(); ++i)
    if (sorted[i]->id == sorted[i - 1]->id)
      throw std::invalid_argument("train_speaker_encoder: duplicate speaker id");

  const int train_hop = opts.train_hop == 0 ? cfg.window : opts.train_hop;

  struct Example {
    Mat<float> frames;
    int label = 0;
  };
  std::vector<Example> train_set;
  std::vector<Example> holdout_set;
  for (std::size_t si = 0; si < sorted.size(); ++si) {
    const SyntheticSpeaker& spk = *sorted[si];
    if (spk.n_enroll < 2)
      throw std::invalid_argument(
          "train_speaker_encoder: every speaker needs at least two utterances");
    int n_hold = std::max(
        1, static_cast<int>(std::lround(opts.holdout_fraction * spk.n_enroll)));
    if (n_hold >= spk.n_enroll) n_hold = spk.n_enroll - 1;
    for (int u = 0; u < spk.n_enroll; ++u) {
      const Waveform utt = enroll_utterance(spk, opts.utterance_s, cfg.sample_rate, u);
      const int n = static_cast<int>(utt.samples.size());
      if (n < cfg.window)
        throw std::invalid_argument("train_speaker_encoder: utterance shorter than one window");
      const bool held = u >= spk.n_enroll - n_hold;
      const int hop = held ? cfg.window : train_hop;
      for (int s : segment_starts(n, cfg.window, hop)) {
        Example ex;
        ex.frames = segment_frames(utt.samples, s, cfg);
        ex.label = static_cast<int>(si);
        (held ? holdout_set : train_set).push_back(std::move(ex));
      }
    }
  }
  if (train_set.empty() || holdout_set.empty())
    throw std::logic_error("train_speaker_encoder: empty split");

  EmbedderTrainResult result;
  result.params = init_embedder(cfg, opts.seed);
  AdamState adam = init_adam(result.params);
  AdamConfig adam_cfg;
  adam_cfg.lr = opts.lr;

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    Rng shuffle_rng(derive_seed(opts.seed, "emb-epoch", static_cast<std::uint64_t>(epoch)));
    fisher_yates(order, shuffle_rng);

    double epoch_loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += opts.batch_size) {
      const std::size_t end = std::min(order.size(), begin + opts.batch_size);
      ad::Tape<float> tape;
      const auto vars = bind_embedder(tape, result.params, cfg, true);
      ad::Var loss_sum;
      bool first = true;
      for (std::size_t k = begin; k < end; ++k) {
        const Example& ex = train_set[order[k]];
        ad::Var logits = classify_segment(
            tape, vars, embed_segment(tape, vars, tape.constant(ex.frames)));
        ad::Var ce = tape.softmax_cross_entropy(logits, ex.label);
        loss_sum = first ? ce : tape.add(loss_sum, ce);
        first = false;
      }
      const float inv_n = 1.0f / static_cast<float>(end - begin);
      ad::Var loss = tape.scale_by_scalar(
          loss_sum, tape.constant(Mat<float>::Constant(1, 1, inv_n)));
      tape.backward(loss);
      epoch_loss_sum += static_cast<double>(tape.value(loss)(0, 0)) *
                        static_cast<double>(end - begin);

      ParamMap<float> grads;
      for (const auto& [name, var] : vars) grads.emplace(name, tape.grad(var));
      adam_step(result.params, grads, adam, adam_cfg);
    }
    result.epoch_losses.push_back(epoch_loss_sum / static_cast<double>(train_set.size()));
  }

  // Held-out segment accuracy with the final weights.
  int correct = 0;
  {
    ad::Tape<float> tape;
    const auto vars = bind_embedder(tape, result.params, cfg, false);
    for (const Example& ex : holdout_set) {
      ad::Var logits =
          classify_segment(tape, vars, embed_segment(tape, vars, tape.constant(ex.frames)));
      const Mat<float>& row = tape.value(logits);
      int arg = 0;
      for (int c = 1; c < row.cols(); ++c)
        if (row(0, c) > row(0, arg)) arg = c;
      if (arg == ex.label) ++correct;
    }
  }
  result.held_out_accuracy = static_cast<double>(correct) / static_cast<double>(holdout_set.size());
  return result;
}

}  // namespace mcx
