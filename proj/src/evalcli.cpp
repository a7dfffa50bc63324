// src/evalcli.cpp
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

#include "mcx/evalcli.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mcx/objectives.hpp"
#include "mcx/rng.hpp"

namespace mcx {

namespace fs = std::filesystem;

namespace {

Eigen::VectorXd to_vector(const std::vector<float>& samples) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) v[static_cast<Eigen::Index>(i)] = samples[i];
  return v;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

// Lossless, deterministic CSV/text rendering of a double.
std::string fmt_full(double v) { return fmt("%.17g", v); }

std::string opt_full(const std::optional<double>& v) { return v ? fmt_full(*v) : "n/a"; }

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::optional<double> opt_from_json(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

void reject_unknown_keys(const nlohmann::json& j, const nlohmann::json& allowed,
                         const char* what) {
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key))
      throw std::invalid_argument(std::string(what) + ": unknown key '" + key + "'");
    (void)value;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Report structure

std::string config_fingerprint(const nlohmann::json& config) {
  const std::string s = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

nlohmann::json ExampleScore::to_json() const {
  nlohmann::json j{{"id", id},
                   {"condition_tag", condition_tag},
                   {"sisnri_oracle_perm", sisnri_oracle_perm}};
  j["sisnri_fixed_order"] =
      sisnri_fixed_order ? nlohmann::json(*sisnri_fixed_order) : nlohmann::json(nullptr);
  j["slot_correct"] = slot_correct ? nlohmann::json(*slot_correct) : nlohmann::json(nullptr);
  return j;
}

ExampleScore ExampleScore::from_json(const nlohmann::json& j) {
  ExampleScore s;
  reject_unknown_keys(j, s.to_json(), "example score");
  s.id = j.at("id").get<std::string>();
  s.condition_tag = j.at("condition_tag").get<std::string>();
  s.sisnri_oracle_perm = j.at("sisnri_oracle_perm").get<double>();
  s.sisnri_fixed_order = opt_from_json(j, "sisnri_fixed_order");
  const auto& sc = j.at("slot_correct");
  if (!sc.is_null()) s.slot_correct = sc.get<bool>();
  return s;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json per_cond = nlohmann::json::object();
  for (const auto& [tag, agg] : per_condition) {
    per_cond[tag] = {{"n", agg.n},
                     {"mean_sisnri_oracle_perm", agg.mean_sisnri_oracle_perm},
                     {"mean_sisnri_fixed_order",
                      agg.mean_sisnri_fixed_order ? nlohmann::json(*agg.mean_sisnri_fixed_order)
                                                  : nlohmann::json(nullptr)}};
  }
  nlohmann::json per_ex = nlohmann::json::array();
  for (const auto& s : per_example) per_ex.push_back(s.to_json());
  return {{"model_config", model_config},
          {"config_fingerprint", config_fingerprint},
          {"fixed_order_applicable", fixed_order_applicable},
          {"aggregates",
           {{"n_examples", static_cast<int>(per_example.size())},
            {"mean_sisnri_oracle_perm", mean_sisnri_oracle_perm},
            {"mean_sisnri_fixed_order",
             mean_sisnri_fixed_order ? nlohmann::json(*mean_sisnri_fixed_order)
                                     : nlohmann::json(nullptr)},
            {"permutation_agreement_rate",
             permutation_agreement_rate ? nlohmann::json(*permutation_agreement_rate)
                                        : nlohmann::json(nullptr)},
            {"per_condition", per_cond}}},
          {"per_example", per_ex}};
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  reject_unknown_keys(j, EvalReport{}.to_json(), "eval report");
  const ModelConfig cfg = ModelConfig::from_json(j.at("model_config"));
  std::vector<ExampleScore> rows;
  for (const auto& row : j.at("per_example")) rows.push_back(ExampleScore::from_json(row));
  // Aggregates are never trusted from disk: rebuild the report from its rows
  // (re-running the invariant checks) and require exact agreement.
  EvalReport r = make_report(cfg, std::move(rows));
  if (j.at("config_fingerprint").get<std::string>() != r.config_fingerprint)
    throw std::invalid_argument("eval report: config fingerprint mismatch");
  if (j.at("fixed_order_applicable").get<bool>() != r.fixed_order_applicable)
    throw std::invalid_argument("eval report: fixed_order_applicable mismatch");
  if (j.at("aggregates") != r.to_json().at("aggregates"))
    throw std::invalid_argument("eval report: stored aggregates do not match the rows");
  return r;
}

// ---------------------------------------------------------------------------
// Scoring

ExampleScore score_example(const LoadedExample& ex, const std::vector<Waveform>& estimates,
                           bool fixed_order_applicable) {
  if (ex.clean.empty()) throw std::invalid_argument("score_example: example has no references");
  if (estimates.size() != ex.clean.size())
    throw std::invalid_argument("score_example: " + std::to_string(estimates.size()) +
                                " estimates for " + std::to_string(ex.clean.size()) + " slots");
  const std::size_t n = ex.mixture.n_samples();
  std::vector<Eigen::VectorXd> ests, refs;
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    if (estimates[k].samples.size() != n || ex.clean[k].samples.size() != n)
      throw std::invalid_argument("score_example: estimate/reference length mismatch in " +
                                  ex.meta.id);
    ests.push_back(to_vector(estimates[k].samples));
    refs.push_back(to_vector(ex.clean[k].samples));
  }
  const Eigen::VectorXd mix0 = to_vector(ex.mixture.channels.at(0));

  // Shared improvement baseline: the raw mixture scored against each slot.
  double baseline = 0.0;
  for (const auto& ref : refs) baseline += si_snr(mix0, ref);
  baseline /= static_cast<double>(refs.size());

  const PitResult pit = pit_assign(ests, refs);

  ExampleScore s;
  s.id = ex.meta.id;
  s.condition_tag = ex.meta.condition_tag;
  s.sisnri_oracle_perm = pit.mean_si_snr - baseline;
  if (fixed_order_applicable) {
    // Same arithmetic path as the identity candidate inside pit_assign, so
    // the oracle score dominates this one exactly, never by rounding luck.
    s.sisnri_fixed_order = -fixed_order_loss(ests, refs) - baseline;
    bool identity = true;
    for (std::size_t k = 0; k < pit.mapping.size(); ++k)
      identity = identity && pit.mapping[k] == static_cast<int>(k);
    s.slot_correct = identity;
  }
  return s;
}

EvalReport make_report(const ModelConfig& cfg, std::vector<ExampleScore> scores) {
  cfg.validate();
  if (scores.empty()) throw std::invalid_argument("make_report: no examples scored");
  const bool fixed_applicable = cfg.conditioning != Conditioning::none;

  struct Acc {
    int n = 0;
    double oracle = 0.0;
    double fixed = 0.0;
  };
  Acc total;
  std::map<std::string, Acc> by_tag;
  int n_correct = 0;
  for (const auto& s : scores) {
    if (!std::isfinite(s.sisnri_oracle_perm))
      throw std::logic_error("make_report: non-finite oracle score for " + s.id);
    if (s.sisnri_fixed_order.has_value() != fixed_applicable ||
        s.slot_correct.has_value() != fixed_applicable)
      throw std::invalid_argument("make_report: fixed-order fields of " + s.id +
                                  " do not match the conditioning mode");
    if (s.sisnri_fixed_order) {
      if (!std::isfinite(*s.sisnri_fixed_order))
        throw std::logic_error("make_report: non-finite fixed-order score for " + s.id);
      if (*s.sisnri_fixed_order > s.sisnri_oracle_perm)
        throw std::logic_error("make_report: fixed-order score exceeds oracle score for " +
                               s.id);
      if (*s.slot_correct) ++n_correct;
    }
    Acc& tag = by_tag[s.condition_tag];
    for (Acc* a : {&total, &tag}) {
      a->n += 1;
      a->oracle += s.sisnri_oracle_perm;
      if (s.sisnri_fixed_order) a->fixed += *s.sisnri_fixed_order;
    }
  }

  EvalReport r;
  r.model_config = cfg.to_json();
  r.config_fingerprint = mcx::config_fingerprint(r.model_config);
  r.fixed_order_applicable = fixed_applicable;
  r.per_example = std::move(scores);
  r.mean_sisnri_oracle_perm = total.oracle / total.n;
  if (fixed_applicable) {
    r.mean_sisnri_fixed_order = total.fixed / total.n;
    r.permutation_agreement_rate = static_cast<double>(n_correct) / total.n;
  }
  for (const auto& [tag, acc] : by_tag) {
    ConditionAggregate agg;
    agg.n = acc.n;
    agg.mean_sisnri_oracle_perm = acc.oracle / acc.n;
    if (fixed_applicable) agg.mean_sisnri_fixed_order = acc.fixed / acc.n;
    r.per_condition[tag] = agg;
  }
  return r;
}

EvalReport evaluate(const ModelConfig& cfg, const ParamMap<float>& params,
                    const std::vector<LoadedExample>& examples, const EmbeddingMap& embeddings) {
  cfg.validate();
  if (examples.empty()) throw std::invalid_argument("evaluate: no examples");
  const bool fixed_applicable = cfg.conditioning != Conditioning::none;
  std::vector<ExampleScore> scores;
  scores.reserve(examples.size());
  for (const auto& ex : examples) {
    if (ex.mixture.sample_rate != cfg.sample_rate)
      throw std::invalid_argument("evaluate: sample rate of " + ex.meta.id +
                                  " does not match the model");
    const auto slot_embs = slot_embeddings(ex.meta, embeddings, cfg);
    const auto ests = run_extractor(cfg, params, ex.mixture, slot_embs);
    scores.push_back(score_example(ex, ests, fixed_applicable));
  }
  return make_report(cfg, std::move(scores));
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::string opt3(const std::optional<double>& v, const char* unit = "") {
  return v ? fmt("%.3f", *v) + std::string(unit) : "n/a";
}

}  // namespace

std::string render_text_summary(const EvalReport& r) {
  std::ostringstream os;
  os << "evaluation summary\n";
  os << "  config fingerprint                 " << r.config_fingerprint << "\n";
  os << "  examples                           " << r.per_example.size() << "\n";
  os << "  mean SI-SNRi, oracle permutation   " << fmt("%.3f", r.mean_sisnri_oracle_perm)
     << " dB\n";
  os << "  mean SI-SNRi, fixed order          " << opt3(r.mean_sisnri_fixed_order, " dB")
     << "\n";
  os << "  slot agreement rate                " << opt3(r.permutation_agreement_rate) << "\n";
  os << "  by condition:\n";
  std::size_t w = std::string("condition").size();
  for (const auto& [tag, agg] : r.per_condition) w = std::max(w, tag.size());
  os << "    " << std::left << std::setw(static_cast<int>(w)) << "condition"
     << std::right << std::setw(6) << "n" << std::setw(12) << "oracle dB" << std::setw(12)
     << "fixed dB" << "\n";
  for (const auto& [tag, agg] : r.per_condition) {
    os << "    " << std::left << std::setw(static_cast<int>(w)) << tag << std::right
       << std::setw(6) << agg.n << std::setw(12) << fmt("%.3f", agg.mean_sisnri_oracle_perm)
       << std::setw(12) << opt3(agg.mean_sisnri_fixed_order) << "\n";
  }
  return os.str();
}

namespace {

constexpr double kSvgW = 640.0, kSvgH = 400.0;
constexpr double kMarginL = 60.0, kMarginR = 20.0, kMarginT = 40.0, kMarginB = 60.0;

std::string svg_open() {
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kSvgW << "\" height=\"" << kSvgH
     << "\" viewBox=\"0 0 " << kSvgW << " " << kSvgH << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << kSvgW << "\" height=\"" << kSvgH
     << "\" fill=\"#ffffff\"/>\n";
  return os.str();
}

std::string svg_rect(double x, double y, double w, double h, const char* fill) {
  std::ostringstream os;
  os << "<rect x=\"" << fmt("%.2f", x) << "\" y=\"" << fmt("%.2f", y) << "\" width=\""
     << fmt("%.2f", w) << "\" height=\"" << fmt("%.2f", h) << "\" fill=\"" << fill << "\"/>\n";
  return os.str();
}

std::string svg_line(double x1, double y1, double x2, double y2) {
  std::ostringstream os;
  os << "<line x1=\"" << fmt("%.2f", x1) << "\" y1=\"" << fmt("%.2f", y1) << "\" x2=\""
     << fmt("%.2f", x2) << "\" y2=\"" << fmt("%.2f", y2)
     << "\" stroke=\"#404040\" stroke-width=\"1\"/>\n";
  return os.str();
}

std::string svg_text(double x, double y, const std::string& s, const char* anchor = "middle",
                     int size = 12) {
  std::ostringstream os;
  os << "<text x=\"" << fmt("%.2f", x) << "\" y=\"" << fmt("%.2f", y)
     << "\" font-family=\"monospace\" font-size=\"" << size << "\" text-anchor=\"" << anchor
     << "\" fill=\"#202020\">" << xml_escape(s) << "</text>\n";
  return os.str();
}

// dB value -> y pixel for a [lo, hi] axis.
double y_px(double v, double lo, double hi) {
  const double plot_h = kSvgH - kMarginT - kMarginB;
  return kMarginT + (hi - v) / (hi - lo) * plot_h;
}

std::string svg_y_axis(double lo, double hi, const char* label) {
  std::ostringstream os;
  os << svg_line(kMarginL, kMarginT, kMarginL, kSvgH - kMarginB);
  const double span = hi - lo;
  double step = 1.0;
  while (span / step > 10.0) step *= 2.0;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9; v += step) {
    const double y = y_px(v, lo, hi);
    os << svg_line(kMarginL - 4.0, y, kMarginL, y);
    os << svg_text(kMarginL - 8.0, y + 4.0, fmt("%.0f", v), "end", 11);
  }
  os << svg_text(14.0, kMarginT - 10.0, label, "start", 12);
  return os.str();
}

}  // namespace

std::string render_condition_bar_svg(const EvalReport& r) {
  const bool with_fixed = r.fixed_order_applicable;
  double lo = 0.0, hi = 0.0;
  for (const auto& [tag, agg] : r.per_condition) {
    lo = std::min(lo, agg.mean_sisnri_oracle_perm);
    hi = std::max(hi, agg.mean_sisnri_oracle_perm);
    if (agg.mean_sisnri_fixed_order) {
      lo = std::min(lo, *agg.mean_sisnri_fixed_order);
      hi = std::max(hi, *agg.mean_sisnri_fixed_order);
    }
  }
  lo = std::floor(lo);
  hi = std::ceil(hi);
  if (hi - lo < 1.0) hi = lo + 1.0;

  std::ostringstream os;
  os << svg_open();
  os << svg_text(kSvgW / 2.0, 20.0, "mean SI-SNRi by condition", "middle", 14);
  os << svg_y_axis(lo, hi, "dB");

  const double plot_w = kSvgW - kMarginL - kMarginR;
  const int n = static_cast<int>(r.per_condition.size());
  const double group_w = plot_w / std::max(1, n);
  const int bars = with_fixed ? 2 : 1;
  const double bar_w = group_w / (bars + 1);
  const double y0 = y_px(0.0, lo, hi);

  int gi = 0;
  for (const auto& [tag, agg] : r.per_condition) {
    const double gx = kMarginL + gi * group_w;
    auto bar = [&](int slot, double v, const char* color) {
      const double x = gx + (slot + 0.5) * bar_w;
      const double y = y_px(v, lo, hi);
      os << svg_rect(x, std::min(y, y0), bar_w * 0.9, std::abs(y0 - y), color);
      os << svg_text(x + bar_w * 0.45, std::min(y, y0) - 4.0, fmt("%.2f", v), "middle", 11);
    };
    bar(0, agg.mean_sisnri_oracle_perm, "#4878a8");
    if (with_fixed && agg.mean_sisnri_fixed_order) bar(1, *agg.mean_sisnri_fixed_order, "#a85848");
    os << svg_text(gx + group_w / 2.0, kSvgH - kMarginB + 16.0, tag, "middle", 11);
    os << svg_text(gx + group_w / 2.0, kSvgH - kMarginB + 30.0,
                   "n=" + std::to_string(agg.n), "middle", 10);
    ++gi;
  }
  os << svg_line(kMarginL, y0, kSvgW - kMarginR, y0);

  os << svg_rect(kMarginL, kSvgH - 18.0, 10.0, 10.0, "#4878a8");
  os << svg_text(kMarginL + 14.0, kSvgH - 9.0, "oracle permutation", "start", 11);
  if (with_fixed) {
    os << svg_rect(kMarginL + 180.0, kSvgH - 18.0, 10.0, 10.0, "#a85848");
    os << svg_text(kMarginL + 194.0, kSvgH - 9.0, "fixed order", "start", 11);
  }
  os << "</svg>\n";
  return os.str();
}

std::string render_sisnri_histogram_svg(const EvalReport& r) {
  double vmin = r.per_example.front().sisnri_oracle_perm;
  double vmax = vmin;
  for (const auto& s : r.per_example) {
    vmin = std::min(vmin, s.sisnri_oracle_perm);
    vmax = std::max(vmax, s.sisnri_oracle_perm);
  }
  const double lo = std::floor(vmin);
  double hi = std::ceil(vmax);
  if (hi - lo < 1.0) hi = lo + 1.0;
  const int n_bins = static_cast<int>(hi - lo);

  std::vector<int> counts(static_cast<std::size_t>(n_bins), 0);
  for (const auto& s : r.per_example) {
    int b = static_cast<int>(std::floor(s.sisnri_oracle_perm - lo));
    b = std::clamp(b, 0, n_bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  const int peak = *std::max_element(counts.begin(), counts.end());

  std::ostringstream os;
  os << svg_open();
  os << svg_text(kSvgW / 2.0, 20.0, "per-example SI-SNRi, oracle permutation", "middle", 14);
  os << svg_y_axis(0.0, static_cast<double>(std::max(1, peak)), "count");

  const double plot_w = kSvgW - kMarginL - kMarginR;
  const double bin_w = plot_w / n_bins;
  const double y0 = y_px(0.0, 0.0, static_cast<double>(std::max(1, peak)));
  for (int b = 0; b < n_bins; ++b) {
    const int c = counts[static_cast<std::size_t>(b)];
    if (c == 0) continue;
    const double y = y_px(static_cast<double>(c), 0.0, static_cast<double>(std::max(1, peak)));
    os << svg_rect(kMarginL + b * bin_w + bin_w * 0.05, y, bin_w * 0.9, y0 - y, "#4878a8");
  }
  os << svg_line(kMarginL, y0, kSvgW - kMarginR, y0);
  // x labels: both edges plus up to ~8 intermediate ticks on whole dB.
  int label_step = 1;
  while (n_bins / label_step > 8) label_step *= 2;
  for (int b = 0; b <= n_bins; b += label_step) {
    const double x = kMarginL + b * bin_w;
    os << svg_line(x, y0, x, y0 + 4.0);
    os << svg_text(x, y0 + 18.0, fmt("%.0f", lo + b), "middle", 11);
  }
  os << svg_text(kSvgW / 2.0, kSvgH - 8.0, "SI-SNRi (dB)", "middle", 12);
  os << "</svg>\n";
  return os.str();
}

void render_report(const EvalReport& report, const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_file((fs::path(out_dir) / "summary.txt").string(), render_text_summary(report));
  write_file((fs::path(out_dir) / "conditions.svg").string(),
             render_condition_bar_svg(report));
  write_file((fs::path(out_dir) / "histogram.svg").string(),
             render_sisnri_histogram_svg(report));
}

// ---------------------------------------------------------------------------
// Experiment matrix

std::string to_string(EmbeddingSource s) {
  switch (s) {
    case EmbeddingSource::oracle: return "oracle";
    case EmbeddingSource::trained: return "trained";
  }
  throw std::invalid_argument("unknown embedding source");
}

EmbeddingSource embedding_source_from_string(const std::string& s) {
  if (s == "oracle") return EmbeddingSource::oracle;
  if (s == "trained") return EmbeddingSource::trained;
  throw std::invalid_argument("unknown embedding source '" + s + "'");
}

nlohmann::json MatrixCell::to_json() const {
  return {{"name", name},
          {"conditioning", mcx::to_string(conditioning)},
          {"loss_mode", mcx::to_string(loss_mode)},
          {"seed", seed},
          {"spatial_dim_override", spatial_dim_override}};
}

MatrixCell MatrixCell::from_json(const nlohmann::json& j) {
  MatrixCell c;
  reject_unknown_keys(j, c.to_json(), "matrix cell");
  if (j.contains("name")) c.name = j.at("name").get<std::string>();
  if (j.contains("conditioning"))
    c.conditioning = conditioning_from_string(j.at("conditioning").get<std::string>());
  if (j.contains("loss_mode"))
    c.loss_mode = loss_mode_from_string(j.at("loss_mode").get<std::string>());
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("spatial_dim_override"))
    c.spatial_dim_override = j.at("spatial_dim_override").get<int>();
  return c;
}

nlohmann::json MatrixSpec::to_json() const {
  nlohmann::json cell_list = nlohmann::json::array();
  for (const auto& c : cells) cell_list.push_back(c.to_json());
  return {{"dataset", dataset.to_json()},
          {"dataset_dir", dataset_dir},
          {"model", base_model.to_json()},
          {"train", base_train.to_json()},
          {"embeddings", mcx::to_string(embeddings)},
          {"embedder", embedder.to_json()},
          {"embedder_train", embedder_train.to_json()},
          {"n_select_eval", n_select_eval},
          {"resume_cells", resume_cells},
          {"cells", cell_list}};
}

MatrixSpec MatrixSpec::from_json(const nlohmann::json& j) {
  MatrixSpec s;
  reject_unknown_keys(j, s.to_json(), "matrix spec");
  if (j.contains("dataset")) s.dataset = DatasetSpec::from_json(j.at("dataset"));
  if (j.contains("dataset_dir")) s.dataset_dir = j.at("dataset_dir").get<std::string>();
  if (j.contains("model")) s.base_model = ModelConfig::from_json(j.at("model"));
  if (j.contains("train")) s.base_train = TrainConfig::from_json(j.at("train"));
  if (j.contains("embeddings"))
    s.embeddings = embedding_source_from_string(j.at("embeddings").get<std::string>());
  if (j.contains("embedder")) s.embedder = EmbedderConfig::from_json(j.at("embedder"));
  if (j.contains("embedder_train"))
    s.embedder_train = EmbedderTrainOptions::from_json(j.at("embedder_train"));
  if (j.contains("n_select_eval")) s.n_select_eval = j.at("n_select_eval").get<int>();
  if (j.contains("resume_cells")) s.resume_cells = j.at("resume_cells").get<bool>();
  for (const auto& cj : j.at("cells")) s.cells.push_back(MatrixCell::from_json(cj));
  return s;
}

std::vector<SpeakerEmbedding> embed_speaker_table(const EmbedderConfig& cfg,
                                                  const ParamMap<float>& params,
                                                  const SpeakerTable& table,
                                                  double utterance_s, int n_select_eval,
                                                  std::uint64_t seed) {
  if (n_select_eval != kSelectAll && n_select_eval < 1)
    throw std::invalid_argument("embed_speaker_table: n_select_eval must be >= 1");
  std::vector<SpeakerEmbedding> cache;
  cache.reserve(table.speakers.size());
  for (const auto& spk : table.speakers) {
    const EnrollmentSet enroll = make_enrollment(spk, utterance_s, cfg.sample_rate);
    // Train-pool speakers average every enrollment take; eval-pool speakers a
    // seeded subset, mirroring how an unseen speaker would be enrolled.
    const int n_select = spk.pool == "train" ? kSelectAll : n_select_eval;
    cache.push_back(global_embedding(cfg, params, enroll, n_select,
                                     derive_seed(seed, "embed-speaker",
                                                 static_cast<std::uint64_t>(spk.id))));
  }
  return cache;
}

std::vector<SpeakerEmbedding> oracle_speaker_table(const SpeakerTable& table,
                                                   int embedding_dim) {
  std::vector<SpeakerEmbedding> cache;
  cache.reserve(table.speakers.size());
  for (const auto& spk : table.speakers)
    cache.push_back(oracle_embedding(spk.id, embedding_dim));
  return cache;
}

EmbeddingMap embedding_map_from_cache(const std::vector<SpeakerEmbedding>& cache) {
  EmbeddingMap map;
  for (const auto& e : cache) {
    if (!map.emplace(e.speaker_id, e.vector).second)
      throw std::invalid_argument("embedding cache: duplicate speaker id " +
                                  std::to_string(e.speaker_id));
  }
  return map;
}

namespace {

std::string default_cell_name(const MatrixCell& c) {
  std::string name = to_string(c.conditioning) + "-" + to_string(c.loss_mode) + "-s" +
                     std::to_string(c.seed);
  if (c.spatial_dim_override >= 0)
    name += "-S" + std::to_string(c.spatial_dim_override);
  return name;
}

void check_cell_name(const std::string& name) {
  if (name.empty()) throw std::invalid_argument("matrix cell: empty name");
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                    (c >= '0' && c <= '9') || c == '.' || c == '_' || c == '-';
    if (!ok)
      throw std::invalid_argument("matrix cell: name '" + name +
                                  "' may only use letters, digits, '.', '_', '-'");
  }
}

}  // namespace

std::vector<CellResult> run_experiment_matrix(const MatrixSpec& spec,
                                              const std::string& out_dir) {
  if (spec.cells.empty()) throw std::invalid_argument("experiment matrix: no cells");
  spec.base_model.validate();
  spec.base_train.validate();

  // Resolve cell names up front so collisions fail before any training runs.
  std::vector<MatrixCell> cells = spec.cells;
  {
    std::set<std::string> seen;
    for (auto& cell : cells) {
      if (cell.name.empty()) cell.name = default_cell_name(cell);
      check_cell_name(cell.name);
      if (!seen.insert(cell.name).second)
        throw std::invalid_argument("experiment matrix: duplicate cell name '" + cell.name +
                                    "'");
    }
  }

  fs::create_directories(out_dir);
  write_file((fs::path(out_dir) / "matrix.json").string(), spec.to_json().dump(2) + "\n");

  // One dataset shared by every cell.
  std::string data_dir = spec.dataset_dir;
  if (data_dir.empty()) {
    data_dir = (fs::path(out_dir) / "data").string();
    build_dataset(spec.dataset, data_dir);
  }
  const SpeakerTable table = SpeakerTable::load((fs::path(data_dir) / "speakers.json").string());
  const auto train_examples = load_dataset(
      data_dir, load_manifest((fs::path(data_dir) / "train_manifest.jsonl").string()));
  const auto eval_examples = load_dataset(
      data_dir, load_manifest((fs::path(data_dir) / "eval_manifest.jsonl").string()));

  // One embedding cache shared by every conditioned cell.
  std::vector<SpeakerEmbedding> cache;
  if (spec.embeddings == EmbeddingSource::oracle) {
    cache = oracle_speaker_table(table, spec.base_model.embedding_dim);
  } else {
    EmbedderConfig ecfg = spec.embedder;
    if (ecfg.embedding_dim != spec.base_model.embedding_dim)
      throw std::invalid_argument(
          "experiment matrix: embedder and model embedding dims differ");
    std::vector<SyntheticSpeaker> train_pool;
    for (const SyntheticSpeaker* spk : table.pool("train")) train_pool.push_back(*spk);
    ecfg.n_classes = static_cast<int>(train_pool.size());
    const EmbedderTrainResult trained =
        train_speaker_encoder(ecfg, train_pool, spec.embedder_train);
    save_embedder((fs::path(out_dir) / "embedder.ckpt").string(), ecfg, trained.params);
    nlohmann::json metrics{{"held_out_accuracy", trained.held_out_accuracy},
                           {"epoch_losses", trained.epoch_losses}};
    write_file((fs::path(out_dir) / "embedder_metrics.json").string(),
               metrics.dump(2) + "\n");
    cache = embed_speaker_table(ecfg, trained.params, table, spec.embedder_train.utterance_s,
                                spec.n_select_eval, spec.embedder_train.seed);
  }
  save_embedding_cache((fs::path(out_dir) / "embeddings.jsonl").string(), cache);
  const EmbeddingMap emap = embedding_map_from_cache(cache);

  std::vector<CellResult> results;
  for (const auto& cell : cells) {
    ModelConfig mcfg = spec.base_model;
    mcfg.conditioning = cell.conditioning;
    if (cell.spatial_dim_override >= 0) mcfg.spatial_dim = cell.spatial_dim_override;
    mcfg.validate();
    TrainConfig tcfg = spec.base_train;
    tcfg.loss_mode = cell.loss_mode;
    tcfg.seed = cell.seed;
    tcfg.validate();

    const fs::path cell_dir = fs::path(out_dir) / "cells" / cell.name;
    fs::create_directories(cell_dir);
    TrainIO io;
    io.checkpoint_path = (cell_dir / "checkpoint.bin").string();
    io.log_csv_path = (cell_dir / "train_log.csv").string();
    io.resume = spec.resume_cells;
    const TrainResult trained = train_extractor(mcfg, tcfg, train_examples, emap, io);

    EvalReport report = evaluate(mcfg, trained.best_params, eval_examples, emap);
    write_file((cell_dir / "report.json").string(), report.to_json().dump(2) + "\n");
    render_report(report, cell_dir.string());
    results.push_back({cell, std::move(report)});
  }

  std::ostringstream csv;
  csv << "cell,conditioning,loss_mode,seed,spatial_dim,n_eval,mean_sisnri_oracle_perm,"
         "mean_sisnri_fixed_order,permutation_agreement_rate,similar_pair_oracle,"
         "dissimilar_pair_oracle\n";
  for (const auto& res : results) {
    const int spatial = res.cell.spatial_dim_override >= 0 ? res.cell.spatial_dim_override
                                                           : spec.base_model.spatial_dim;
    auto condition_mean = [&](const char* tag) -> std::string {
      const auto it = res.report.per_condition.find(tag);
      return it == res.report.per_condition.end()
                 ? "n/a"
                 : fmt_full(it->second.mean_sisnri_oracle_perm);
    };
    csv << res.cell.name << "," << to_string(res.cell.conditioning) << ","
        << to_string(res.cell.loss_mode) << "," << res.cell.seed << "," << spatial << ","
        << res.report.per_example.size() << "," << fmt_full(res.report.mean_sisnri_oracle_perm)
        << "," << opt_full(res.report.mean_sisnri_fixed_order) << ","
        << opt_full(res.report.permutation_agreement_rate) << ","
        << condition_mean("similar-pair") << "," << condition_mean("dissimilar-pair") << "\n";
  }
  write_file((fs::path(out_dir) / "comparison.csv").string(), csv.str());
  return results;
}

}  // namespace mcx
