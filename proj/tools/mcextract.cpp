// tools/mcextract.cpp
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
//
// Command-line front end: dataset simulation, embedder/extractor training,
// embedding caches, evaluation reports, experiment matrices, and report
// rendering. Every command is deterministic given its config and seed.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include "mcx/evalcli.hpp"
#include "mcx/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// One config file serves every verb; each verb reads only its sections.
const std::set<std::string>& known_sections() {
  static const std::set<std::string> sections = {
      "dataset",   "model",         "train",         "embedder",
      "embeddings", "embedder_train", "n_select_eval", "matrix"};
  return sections;
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path);
  json j = json::parse(in);
  if (!j.is_object()) throw std::invalid_argument("config root must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!known_sections().count(key))
      throw std::invalid_argument("config: unknown section '" + key + "'");
    (void)value;
  }
  return j;
}

template <typename T>
T section_or_default(const json& cfg, const char* name) {
  return cfg.contains(name) ? T::from_json(cfg.at(name)) : T{};
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

std::string require_out(const std::string& out) {
  if (out.empty()) throw std::invalid_argument("--out is required for this command");
  fs::create_directories(out);
  return out;
}

std::vector<mcx::SyntheticSpeaker> train_pool(const mcx::SpeakerTable& table) {
  std::vector<mcx::SyntheticSpeaker> pool;
  for (const mcx::SyntheticSpeaker* spk : table.pool("train")) pool.push_back(*spk);
  return pool;
}

mcx::EmbeddingSource embedding_source(const json& cfg) {
  return cfg.contains("embeddings")
             ? mcx::embedding_source_from_string(cfg.at("embeddings").get<std::string>())
             : mcx::EmbeddingSource::trained;
}

// Embedding map for a conditioned run: an explicit cache file when given,
// otherwise identity one-hots over the dataset's speaker table ("oracle").
mcx::EmbeddingMap resolve_embeddings(const mcx::ModelConfig& mcfg, const json& cfg,
                                     const std::string& data_dir,
                                     const std::string& cache_path) {
  if (mcfg.conditioning == mcx::Conditioning::none) return {};
  if (!cache_path.empty())
    return mcx::embedding_map_from_cache(mcx::load_embedding_cache(cache_path));
  if (embedding_source(cfg) == mcx::EmbeddingSource::oracle) {
    const auto table = mcx::SpeakerTable::load((fs::path(data_dir) / "speakers.json").string());
    return mcx::embedding_map_from_cache(
        mcx::oracle_speaker_table(table, mcfg.embedding_dim));
  }
  throw std::invalid_argument(
      "a conditioned model needs --cache, or \"embeddings\": \"oracle\" in the config");
}

int cmd_simulate(const json& cfg, std::optional<std::uint64_t> seed, const std::string& out) {
  auto spec = section_or_default<mcx::DatasetSpec>(cfg, "dataset");
  if (seed) spec.seed = *seed;
  mcx::build_dataset(spec, require_out(out));
  std::printf("dataset: %d train + %d eval mixtures, %d+%d speakers -> %s\n", spec.n_train,
              spec.n_eval, spec.n_train_speakers, spec.n_eval_speakers, out.c_str());
  return 0;
}

int cmd_train_embedder(const json& cfg, std::optional<std::uint64_t> seed,
                       const std::string& out, const std::string& data_dir) {
  const auto table = mcx::SpeakerTable::load((fs::path(data_dir) / "speakers.json").string());
  const auto pool = train_pool(table);
  auto ecfg = section_or_default<mcx::EmbedderConfig>(cfg, "embedder");
  ecfg.n_classes = static_cast<int>(pool.size());
  auto opts = section_or_default<mcx::EmbedderTrainOptions>(cfg, "embedder_train");
  if (seed) opts.seed = *seed;

  const auto result = mcx::train_speaker_encoder(ecfg, pool, opts);
  require_out(out);
  mcx::save_embedder((fs::path(out) / "embedder.ckpt").string(), ecfg, result.params);
  const json metrics{{"held_out_accuracy", result.held_out_accuracy},
                     {"epoch_losses", result.epoch_losses}};
  write_text((fs::path(out) / "embedder_metrics.json").string(), metrics.dump(2) + "\n");
  std::printf("embedder: %zu speakers, held-out segment accuracy %.3f -> %s\n", pool.size(),
              result.held_out_accuracy, out.c_str());
  return 0;
}

int cmd_embed(const json& cfg, std::optional<std::uint64_t> seed, const std::string& out,
              const std::string& data_dir, const std::string& embedder_path) {
  const auto table = mcx::SpeakerTable::load((fs::path(data_dir) / "speakers.json").string());
  std::vector<mcx::SpeakerEmbedding> cache;
  if (embedding_source(cfg) == mcx::EmbeddingSource::oracle) {
    const auto mcfg = section_or_default<mcx::ModelConfig>(cfg, "model");
    cache = mcx::oracle_speaker_table(table, mcfg.embedding_dim);
  } else {
    if (embedder_path.empty())
      throw std::invalid_argument("--embedder is required unless embeddings are \"oracle\"");
    const auto [ecfg, params] = mcx::load_embedder(embedder_path);
    const auto opts = section_or_default<mcx::EmbedderTrainOptions>(cfg, "embedder_train");
    const int n_select =
        cfg.contains("n_select_eval") ? cfg.at("n_select_eval").get<int>() : 3;
    cache = mcx::embed_speaker_table(ecfg, params, table, opts.utterance_s, n_select,
                                     seed.value_or(0));
  }
  require_out(out);
  const std::string path = (fs::path(out) / "embeddings.jsonl").string();
  mcx::save_embedding_cache(path, cache);
  std::printf("embeddings: %zu speakers -> %s\n", cache.size(), path.c_str());
  return 0;
}

int cmd_train(const json& cfg, std::optional<std::uint64_t> seed, const std::string& out,
              const std::string& data_dir, const std::string& cache_path, bool resume) {
  const auto mcfg = section_or_default<mcx::ModelConfig>(cfg, "model");
  auto tcfg = section_or_default<mcx::TrainConfig>(cfg, "train");
  if (seed) tcfg.seed = *seed;

  const auto examples = mcx::load_dataset(
      data_dir, mcx::load_manifest((fs::path(data_dir) / "train_manifest.jsonl").string()));
  const auto emap = resolve_embeddings(mcfg, cfg, data_dir, cache_path);

  require_out(out);
  mcx::TrainIO io;
  io.checkpoint_path = (fs::path(out) / "checkpoint.bin").string();
  io.log_csv_path = (fs::path(out) / "train_log.csv").string();
  io.resume = resume;
  const auto result = mcx::train_extractor(mcfg, tcfg, examples, emap, io);

  mcx::save_params((fs::path(out) / "model_best.ckpt").string(), mcfg, result.best_params);
  mcx::save_params((fs::path(out) / "model_last.ckpt").string(), mcfg, result.params);
  std::printf("train: %d epochs, best val loss %.6f, final lr %g -> %s\n", result.state.epoch,
              result.state.best_val_loss, result.state.current_lr, out.c_str());
  return 0;
}

int cmd_evaluate(const json& cfg, const std::string& out, const std::string& data_dir,
                 const std::string& checkpoint, const std::string& cache_path,
                 const std::string& manifest_name) {
  const auto [mcfg, params] = mcx::load_params(checkpoint);
  const auto examples = mcx::load_dataset(
      data_dir, mcx::load_manifest((fs::path(data_dir) / manifest_name).string()));
  const auto emap = resolve_embeddings(mcfg, cfg, data_dir, cache_path);

  const mcx::EvalReport report = mcx::evaluate(mcfg, params, examples, emap);
  require_out(out);
  write_text((fs::path(out) / "report.json").string(), report.to_json().dump(2) + "\n");
  mcx::render_report(report, out);
  std::fputs(mcx::render_text_summary(report).c_str(), stdout);
  return 0;
}

int cmd_matrix(const json& cfg, std::optional<std::uint64_t> seed, const std::string& out) {
  if (!cfg.contains("matrix"))
    throw std::invalid_argument("matrix: config must contain a \"matrix\" section");
  auto spec = mcx::MatrixSpec::from_json(cfg.at("matrix"));
  if (seed) {
    // One flag reseeds the shared data and embedder; per-cell training seeds
    // stay as configured, since the cells enumerate them on purpose.
    spec.dataset.seed = *seed;
    spec.embedder_train.seed = mcx::derive_seed(*seed, "embedder");
  }
  const auto results = mcx::run_experiment_matrix(spec, require_out(out));
  auto opt3 = [](const std::optional<double>& v, const char* suffix) {
    if (!v) return std::string("n/a");
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.3f%s", *v, suffix);
    return std::string(buf);
  };
  for (const auto& res : results) {
    std::printf("cell %-28s oracle %8.3f dB  fixed %s  agreement %s\n",
                res.cell.name.c_str(), res.report.mean_sisnri_oracle_perm,
                opt3(res.report.mean_sisnri_fixed_order, " dB").c_str(),
                opt3(res.report.permutation_agreement_rate, "").c_str());
  }
  std::printf("matrix: %zu cells -> %s\n", results.size(), out.c_str());
  return 0;
}

int cmd_report(const std::string& in_path, const std::string& out) {
  std::ifstream in(in_path);
  if (!in) throw std::runtime_error("cannot read report " + in_path);
  const mcx::EvalReport report = mcx::EvalReport::from_json(json::parse(in));
  mcx::render_report(report, require_out(out));
  std::fputs(mcx::render_text_summary(report).c_str(), stdout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mcextract: multi-channel target-speaker extraction workbench"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed_value = 0;
  app.add_option("--config", config_path, "JSON config file (per-verb sections)");
  auto* seed_opt = app.add_option("--seed", seed_value, "override the relevant seed");
  app.add_option("--out", out_dir, "output directory");

  std::string data_dir, embedder_path, cache_path, checkpoint_path, in_path;
  std::string manifest_name = "eval_manifest.jsonl";
  bool resume = false;

  auto* sim = app.add_subcommand("simulate", "synthesize a mixture dataset");
  auto* temb = app.add_subcommand("train-embedder", "train the speaker encoder");
  temb->add_option("--data", data_dir, "dataset directory")->required();
  auto* emb = app.add_subcommand("embed", "build a speaker embedding cache");
  emb->add_option("--data", data_dir, "dataset directory")->required();
  emb->add_option("--embedder", embedder_path, "trained embedder checkpoint");
  auto* tr = app.add_subcommand("train", "train the extractor");
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--cache", cache_path, "embedding cache (jsonl)");
  tr->add_flag("--resume", resume, "continue from the checkpoint in --out");
  auto* ev = app.add_subcommand("evaluate", "score a checkpoint and write a report");
  ev->add_option("--data", data_dir, "dataset directory")->required();
  ev->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  ev->add_option("--cache", cache_path, "embedding cache (jsonl)");
  ev->add_option("--manifest", manifest_name, "manifest file inside --data");
  auto* mx = app.add_subcommand("matrix", "train and evaluate an experiment grid");
  auto* rep = app.add_subcommand("report", "render an existing report");
  rep->add_option("--in", in_path, "report.json to render")->required();

  for (auto* sub : {sim, temb, emb, tr, ev, mx, rep}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    const json cfg = load_config(config_path);
    std::optional<std::uint64_t> seed;
    if (seed_opt->count() > 0) seed = seed_value;
    if (sim->parsed()) return cmd_simulate(cfg, seed, out_dir);
    if (temb->parsed()) return cmd_train_embedder(cfg, seed, out_dir, data_dir);
    if (emb->parsed()) return cmd_embed(cfg, seed, out_dir, data_dir, embedder_path);
    if (tr->parsed()) return cmd_train(cfg, seed, out_dir, data_dir, cache_path, resume);
    if (ev->parsed())
      return cmd_evaluate(cfg, out_dir, data_dir, checkpoint_path, cache_path, manifest_name);
    if (mx->parsed()) return cmd_matrix(cfg, seed, out_dir);
    if (rep->parsed()) return cmd_report(in_path, out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "mcextract: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
