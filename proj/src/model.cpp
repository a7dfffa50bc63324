// src/model.cpp
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

#include "mcx/model.hpp"

#include <cmath>
#include <stdexcept>

#include "mcx/checkpoint.hpp"
#include "mcx/rng.hpp"

namespace mcx {
namespace {

constexpr double kNormEps = 1e-5;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void check_param_shapes(const ModelConfig& cfg, const ParamMap<float>& params,
                        const char* context) {
  const auto shapes = param_shapes(cfg);
  for (const auto& [name, shape] : shapes) {
    auto it = params.find(name);
    if (it == params.end())
      throw std::runtime_error(std::string(context) + ": missing tensor '" + name + "'");
    if (it->second.rows() != shape.rows || it->second.cols() != shape.cols)
      throw std::runtime_error(std::string(context) + ": shape mismatch for '" + name + "'");
  }
  for (const auto& [name, tensor] : params) {
    (void)tensor;
    if (!shapes.count(name))
      throw std::runtime_error(std::string(context) + ": unexpected tensor '" + name + "'");
  }
}

}  // namespace

std::map<std::string, TensorShape> param_shapes(const ModelConfig& cfg) {
  cfg.validate();
  const Eigen::Index N = cfg.spectral_dim, S = cfg.spatial_dim, L = cfg.kernel_len;
  const Eigen::Index C = cfg.channels, CU = cfg.expanded_channels;
  const Eigen::Index E = cfg.speaker_dim, D = cfg.embedding_dim, K = cfg.max_speakers;
  const Eigen::Index M = cfg.num_mics, ND = N + S, Din = cfg.separator_input_dim();

  std::map<std::string, TensorShape> shapes;
  shapes["enc.spec.w"] = {L, N};
  if (S > 0) shapes["enc.spat.w"] = {M * L, S};

  shapes["sep.norm.gamma"] = {1, Din};
  shapes["sep.norm.beta"] = {1, Din};
  shapes["sep.bottleneck.w"] = {Din, C};
  for (int b = 0; b < cfg.num_blocks; ++b) {
    const std::string pre = "sep.block" + std::to_string(b) + ".";
    shapes[pre + "in.w"] = {C, CU};
    shapes[pre + "in.prelu"] = {1, CU};
    shapes[pre + "in.norm.gamma"] = {1, CU};
    shapes[pre + "in.norm.beta"] = {1, CU};
    for (int q = 0; q < cfg.num_scales; ++q) {
      const std::string down = pre + "down" + std::to_string(q) + ".";
      shapes[down + "w"] = {5, CU};
      shapes[down + "prelu"] = {1, CU};
      shapes[down + "norm.gamma"] = {1, CU};
      shapes[down + "norm.beta"] = {1, CU};
    }
    shapes[pre + "out.w"] = {CU, C};
    shapes[pre + "out.prelu"] = {1, C};
    shapes[pre + "out.norm.gamma"] = {1, C};
    shapes[pre + "out.norm.beta"] = {1, C};
  }

  if (cfg.conditioning == Conditioning::multiply) {
    shapes["sep.cond.emb.w"] = {D, C};
    for (int k = 0; k < K; ++k) {
      const std::string head = "sep.mask.head" + std::to_string(k) + ".";
      shapes[head + "w"] = {C, ND};
      shapes[head + "b"] = {1, ND};
    }
  } else {
    shapes["sep.mask.w"] = {C, K * ND};
    shapes["sep.mask.b"] = {1, K * ND};
  }

  if (cfg.conditioning == Conditioning::split) {
    shapes["spk.norm.gamma"] = {1, ND};
    shapes["spk.norm.beta"] = {1, ND};
    shapes["spk.bottleneck.w"] = {ND, C};
    shapes["spk.tcn.in.w"] = {C, CU};
    shapes["spk.tcn.in.prelu"] = {1, CU};
    shapes["spk.tcn.in.norm.gamma"] = {1, CU};
    shapes["spk.tcn.in.norm.beta"] = {1, CU};
    shapes["spk.tcn.dw.w"] = {3, CU};
    shapes["spk.tcn.dw.prelu"] = {1, CU};
    shapes["spk.tcn.dw.norm.gamma"] = {1, CU};
    shapes["spk.tcn.dw.norm.beta"] = {1, CU};
    shapes["spk.tcn.out.w"] = {CU, C};
    for (int k = 0; k < K; ++k) shapes["spk.adapt" + std::to_string(k) + ".w"] = {C, E};
    shapes["spk.emb.w"] = {D, E};
    shapes["spk.out.w"] = {K * E, E};
  }

  shapes["dec.w"] = {ND, L};
  shapes["dec.b"] = {1, 1};
  return shapes;
}

ParamMap<float> init_from_shapes(const std::map<std::string, TensorShape>& shapes,
                                 std::uint64_t seed) {
  ParamMap<float> params;
  for (const auto& [name, shape] : shapes) {
    Mat<float> t(shape.rows, shape.cols);
    if (ends_with(name, ".prelu")) {
      t.setConstant(0.25f);
    } else if (ends_with(name, ".norm.gamma")) {
      t.setOnes();
    } else if (ends_with(name, ".norm.beta") || ends_with(name, ".b")) {
      t.setZero();
    } else {
      Rng rng(derive_seed(seed, name));
      const double bound = 1.0 / std::sqrt(static_cast<double>(shape.rows));
      for (Eigen::Index i = 0; i < t.size(); ++i)
        t.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
    }
    params.emplace(name, std::move(t));
  }
  return params;
}

ParamMap<float> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  return init_from_shapes(param_shapes(cfg), seed);
}

void save_params(const std::string& path, const ModelConfig& cfg, const ParamMap<float>& params) {
  check_param_shapes(cfg, params, "save_params");
  Checkpoint ck;
  ck.meta["model_config"] = cfg.to_json();
  ck.sections["params"] = params;
  save_checkpoint(path, ck);
}

std::pair<ModelConfig, ParamMap<float>> load_params(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (!ck.meta.contains("model_config"))
    throw std::runtime_error("load_params: checkpoint has no model config: " + path);
  const ModelConfig cfg = ModelConfig::from_json(ck.meta.at("model_config"));
  auto it = ck.sections.find("params");
  if (it == ck.sections.end())
    throw std::runtime_error("load_params: checkpoint has no params section: " + path);
  check_param_shapes(cfg, it->second, "load_params");
  return {cfg, std::move(it->second)};
}

int frame_count(int n_samples, int kernel_len, int stride) {
  if (n_samples < kernel_len)
    throw std::invalid_argument("frame_count: input shorter than one kernel");
  return (n_samples - kernel_len) / stride + 1;
}

template <typename S>
Mat<S> frame_rows(const std::vector<float>& x, int kernel_len, int stride) {
  const int F = frame_count(static_cast<int>(x.size()), kernel_len, stride);
  Mat<S> out(F, kernel_len);
  for (int f = 0; f < F; ++f)
    for (int j = 0; j < kernel_len; ++j)
      out(f, j) = static_cast<S>(x[static_cast<std::size_t>(f * stride + j)]);
  return out;
}

template <typename S>
Mat<S> frame_rows_multi(const MultiWaveform& x, int kernel_len, int stride) {
  const int M = static_cast<int>(x.n_channels());
  const int F = frame_count(static_cast<int>(x.n_samples()), kernel_len, stride);
  Mat<S> out(F, static_cast<Eigen::Index>(M) * kernel_len);
  for (int m = 0; m < M; ++m)
    for (int f = 0; f < F; ++f)
      for (int j = 0; j < kernel_len; ++j)
        out(f, m * kernel_len + j) =
            static_cast<S>(x.channels[static_cast<std::size_t>(m)]
                                     [static_cast<std::size_t>(f * stride + j)]);
  return out;
}

template <typename S>
ExtractorGraph<S>::ExtractorGraph(Tape<S>& tape, const std::map<std::string, Var>& params,
                                  const ModelConfig& cfg)
    : tape_(&tape), params_(&params), cfg_(cfg) {
  cfg_.validate();
}

template <typename S>
Var ExtractorGraph<S>::p(const std::string& name) const {
  auto it = params_->find(name);
  if (it == params_->end())
    throw std::invalid_argument("model: missing parameter tensor '" + name + "'");
  return it->second;
}

template <typename S>
Var ExtractorGraph<S>::spectral_encode(Var frames) {
  return tape_->relu(tape_->matmul(frames, p("enc.spec.w")));
}

template <typename S>
Var ExtractorGraph<S>::spatial_encode(Var frames) {
  if (cfg_.spatial_dim == 0)
    throw std::invalid_argument("model: spatial encoder disabled (spatial_dim = 0)");
  return tape_->relu(tape_->matmul(frames, p("enc.spat.w")));
}

template <typename S>
Var ExtractorGraph<S>::tcn_block(const std::string& prefix, Var x, int dilation) {
  if (dilation < 1) throw std::invalid_argument("model: dilation must be >= 1");
  Tape<S>& t = *tape_;
  const S eps = static_cast<S>(kNormEps);
  Var h = t.matmul(x, p(prefix + ".in.w"));
  h = t.channel_norm(t.prelu(h, p(prefix + ".in.prelu")), p(prefix + ".in.norm.gamma"),
                     p(prefix + ".in.norm.beta"), eps);
  h = t.depthwise3(h, p(prefix + ".dw.w"), dilation);
  h = t.channel_norm(t.prelu(h, p(prefix + ".dw.prelu")), p(prefix + ".dw.norm.gamma"),
                     p(prefix + ".dw.norm.beta"), eps);
  h = t.matmul(h, p(prefix + ".out.w"));
  return t.add(x, h);
}

template <typename S>
Var ExtractorGraph<S>::u_conv_block(const std::string& prefix, Var x) {
  Tape<S>& t = *tape_;
  const S eps = static_cast<S>(kNormEps);
  const Eigen::Index frames = t.value(x).rows();
  if (frames < (Eigen::Index(1) << cfg_.num_scales))
    throw std::invalid_argument("model: too few frames for the resampling depth");

  auto conv_act = [&](Var v, const std::string& layer) {
    return t.channel_norm(t.prelu(v, p(layer + ".prelu")), p(layer + ".norm.gamma"),
                          p(layer + ".norm.beta"), eps);
  };

  std::vector<Var> scales;
  std::vector<int> lengths;
  Var h = conv_act(t.matmul(x, p(prefix + ".in.w")), prefix + ".in");
  scales.push_back(h);
  lengths.push_back(static_cast<int>(t.value(h).rows()));
  for (int q = 0; q < cfg_.num_scales; ++q) {
    const std::string layer = prefix + ".down" + std::to_string(q);
    h = conv_act(t.downsample5(h, p(layer + ".w")), layer);
    scales.push_back(h);
    lengths.push_back(static_cast<int>(t.value(h).rows()));
  }

  Var u = scales[static_cast<std::size_t>(cfg_.num_scales)];
  for (int q = cfg_.num_scales - 1; q >= 0; --q)
    u = t.add(t.upsample2(u, lengths[static_cast<std::size_t>(q)]),
              scales[static_cast<std::size_t>(q)]);

  Var out = conv_act(t.matmul(u, p(prefix + ".out.w")), prefix + ".out");
  return t.add(x, out);
}

template <typename S>
std::vector<Var> ExtractorGraph<S>::separator(Var y, const std::vector<Var>& emb_gates) {
  Tape<S>& t = *tape_;
  const S eps = static_cast<S>(kNormEps);
  const int K = cfg_.max_speakers;
  const int ND = cfg_.feature_dim();
  const bool gated = cfg_.conditioning == Conditioning::multiply;

  if (t.value(y).cols() != cfg_.separator_input_dim())
    throw std::invalid_argument("model: separator input width does not match conditioning mode");
  if (gated && static_cast<int>(emb_gates.size()) != K)
    throw std::invalid_argument("model: multiply conditioning needs one gate per slot");
  if (!gated && !emb_gates.empty())
    throw std::invalid_argument("model: gates are only valid in multiply mode");

  Var h = t.instance_norm(y, p("sep.norm.gamma"), p("sep.norm.beta"), eps);
  h = t.matmul(h, p("sep.bottleneck.w"));
  const int hook = (cfg_.num_blocks + 1) / 2 - 1;  // after block ceil(B/2)
  for (int b = 0; b < cfg_.num_blocks; ++b) {
    h = u_conv_block("sep.block" + std::to_string(b), h);
    if (gated && b == hook) {
      Var joint = emb_gates[0];
      for (int k = 1; k < K; ++k) joint = t.add(joint, emb_gates[static_cast<std::size_t>(k)]);
      h = t.mul_row_vec(h, joint);
    }
  }

  std::vector<Var> masks;
  if (gated) {
    for (int k = 0; k < K; ++k) {
      const std::string head = "sep.mask.head" + std::to_string(k);
      Var hk = t.mul_row_vec(h, emb_gates[static_cast<std::size_t>(k)]);
      masks.push_back(t.sigmoid(t.add_row_vec(t.matmul(hk, p(head + ".w")), p(head + ".b"))));
    }
  } else {
    Var all = t.sigmoid(t.add_row_vec(t.matmul(h, p("sep.mask.w")), p("sep.mask.b")));
    for (int k = 0; k < K; ++k) masks.push_back(t.slice_cols(all, k * ND, ND));
  }
  return masks;
}

template <typename S>
Var ExtractorGraph<S>::speaker_stack(Var y, const std::vector<Var>& embeddings) {
  Tape<S>& t = *tape_;
  const S eps = static_cast<S>(kNormEps);
  const int K = cfg_.max_speakers;
  if (static_cast<int>(embeddings.size()) != K)
    throw std::invalid_argument("model: speaker stack needs exactly one embedding per slot");
  for (Var e : embeddings)
    if (t.value(e).rows() != 1 || t.value(e).cols() != cfg_.embedding_dim)
      throw std::invalid_argument("model: embedding has the wrong dimension");

  Var z = t.instance_norm(y, p("spk.norm.gamma"), p("spk.norm.beta"), eps);
  z = t.matmul(z, p("spk.bottleneck.w"));
  z = tcn_block("spk.tcn", z, 1);

  Var cat;
  for (int k = 0; k < K; ++k) {
    Var slot = t.matmul(z, p("spk.adapt" + std::to_string(k) + ".w"));
    Var gate = t.matmul(embeddings[static_cast<std::size_t>(k)], p("spk.emb.w"));
    Var modulated = t.mul_row_vec(slot, gate);
    cat = k == 0 ? modulated : t.concat_cols(cat, modulated);
  }
  return t.relu(t.matmul(cat, p("spk.out.w")));
}

template <typename S>
Var ExtractorGraph<S>::decode(Var masked, int target_len) {
  Tape<S>& t = *tape_;
  Var wav = t.overlap_add(masked, p("dec.w"), p("dec.b"), cfg_.stride);
  const int produced = static_cast<int>(t.value(wav).rows());
  if (produced > target_len) wav = t.slice_rows(wav, produced - target_len, target_len);
  else if (produced < target_len) wav = t.pad_rows(wav, target_len - produced);
  return wav;
}

template <typename S>
std::vector<Var> ExtractorGraph<S>::forward(const MultiWaveform& mix,
                                            const std::vector<Var>& embeddings) {
  Tape<S>& t = *tape_;
  const int K = cfg_.max_speakers;
  const int T = static_cast<int>(mix.n_samples());

  if (static_cast<int>(mix.n_channels()) != cfg_.num_mics)
    throw std::invalid_argument("model: mixture channel count does not match config");
  if (cfg_.conditioning == Conditioning::none) {
    if (!embeddings.empty())
      throw std::invalid_argument("model: embeddings supplied to an unconditioned model");
  } else {
    if (static_cast<int>(embeddings.size()) != K)
      throw std::invalid_argument("model: conditioned forward needs one embedding per slot");
    for (Var e : embeddings)
      if (t.value(e).rows() != 1 || t.value(e).cols() != cfg_.embedding_dim)
        throw std::invalid_argument("model: embedding has the wrong dimension");
  }

  const int F = frame_count(T, cfg_.kernel_len, cfg_.stride);
  Var rep = spectral_encode(
      t.constant(frame_rows<S>(mix.channels[0], cfg_.kernel_len, cfg_.stride)));
  if (cfg_.spatial_dim > 0) {
    Var spat = spatial_encode(t.constant(frame_rows_multi<S>(mix, cfg_.kernel_len, cfg_.stride)));
    rep = t.concat_cols(rep, spat);
  }

  Var y = rep;
  std::vector<Var> gates;
  switch (cfg_.conditioning) {
    case Conditioning::none:
      break;
    case Conditioning::split:
      y = t.concat_cols(rep, speaker_stack(rep, embeddings));
      break;
    case Conditioning::concat:
      for (Var e : embeddings) y = t.concat_cols(y, t.tile_rows(e, F));
      break;
    case Conditioning::multiply:
      for (Var e : embeddings) gates.push_back(t.matmul(e, p("sep.cond.emb.w")));
      break;
  }

  const std::vector<Var> masks = separator(y, gates);
  std::vector<Var> outs;
  for (int k = 0; k < K; ++k)
    outs.push_back(decode(t.cmul(masks[static_cast<std::size_t>(k)], rep), T));
  return outs;
}

template <typename S>
std::vector<Var> ExtractorGraph<S>::forward(const MultiWaveform& mix,
                                            const std::vector<std::vector<float>>& embeddings) {
  std::vector<Var> vars;
  for (const auto& e : embeddings) {
    Mat<S> row(1, static_cast<Eigen::Index>(e.size()));
    for (std::size_t i = 0; i < e.size(); ++i)
      row(0, static_cast<Eigen::Index>(i)) = static_cast<S>(e[i]);
    vars.push_back(tape_->constant(std::move(row)));
  }
  return forward(mix, vars);
}

template <typename S>
std::map<std::string, Var> bind_params(Tape<S>& tape, const ParamMap<S>& params,
                                       const ModelConfig& cfg, bool needs_grad) {
  const auto shapes = param_shapes(cfg);
  std::map<std::string, Var> vars;
  for (const auto& [name, shape] : shapes) {
    auto it = params.find(name);
    if (it == params.end())
      throw std::invalid_argument("bind_params: missing tensor '" + name + "'");
    if (it->second.rows() != shape.rows || it->second.cols() != shape.cols)
      throw std::invalid_argument("bind_params: shape mismatch for '" + name + "'");
    vars.emplace(name, tape.leaf(it->second, needs_grad));
  }
  if (params.size() != shapes.size())
    throw std::invalid_argument("bind_params: unexpected extra tensors");
  return vars;
}

std::vector<Waveform> run_extractor(const ModelConfig& cfg, const ParamMap<float>& params,
                                    const MultiWaveform& mix,
                                    const std::vector<std::vector<float>>& embeddings) {
  Tape<float> tape;
  const auto vars = bind_params(tape, params, cfg, false);
  ExtractorGraph<float> graph(tape, vars, cfg);
  const auto outs = graph.forward(mix, embeddings);
  std::vector<Waveform> waves;
  for (Var v : outs) {
    Waveform w;
    w.sample_rate = mix.sample_rate;
    const Mat<float>& col = tape.value(v);
    w.samples.assign(col.data(), col.data() + col.size());
    waves.push_back(std::move(w));
  }
  return waves;
}

template Mat<float> frame_rows<float>(const std::vector<float>&, int, int);
template Mat<double> frame_rows<double>(const std::vector<float>&, int, int);
template Mat<float> frame_rows_multi<float>(const MultiWaveform&, int, int);
template Mat<double> frame_rows_multi<double>(const MultiWaveform&, int, int);
template class ExtractorGraph<float>;
template class ExtractorGraph<double>;
template std::map<std::string, Var> bind_params<float>(Tape<float>&, const ParamMap<float>&,
                                                       const ModelConfig&, bool);
template std::map<std::string, Var> bind_params<double>(Tape<double>&, const ParamMap<double>&,
                                                        const ModelConfig&, bool);

}  // namespace mcx
