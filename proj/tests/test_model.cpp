// tests/test_model.cpp
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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "doctest.h"
#include "mcx/checkpoint.hpp"
#include "mcx/config.hpp"
#include "mcx/model.hpp"
#include "mcx/objectives.hpp"
#include "mcx/rng.hpp"

namespace fs = std::filesystem;
using DTape = mcx::ad::Tape<double>;
using DMat = mcx::ad::Mat<double>;
using mcx::ad::Var;

namespace {

mcx::ModelConfig tiny_config(mcx::Conditioning mode) {
  mcx::ModelConfig cfg;
  cfg.spectral_dim = 8;
  cfg.spatial_dim = 4;
  cfg.kernel_len = 16;
  cfg.stride = 8;
  cfg.num_blocks = 2;
  cfg.num_scales = 2;
  cfg.channels = 8;
  cfg.expanded_channels = 16;
  cfg.speaker_dim = 8;
  cfg.embedding_dim = 8;
  cfg.max_speakers = 2;
  cfg.num_mics = 2;
  cfg.conditioning = mode;
  return cfg;
}

mcx::MultiWaveform random_mix(int n_channels, int n_samples, std::uint64_t seed) {
  mcx::Rng rng(seed);
  mcx::MultiWaveform mix;
  mix.channels.resize(static_cast<std::size_t>(n_channels));
  for (auto& ch : mix.channels) {
    ch.resize(static_cast<std::size_t>(n_samples));
    for (auto& v : ch) v = static_cast<float>(0.5 * rng.gaussian());
  }
  return mix;
}

std::vector<std::vector<float>> random_embeddings(int count, int dim, std::uint64_t seed) {
  mcx::Rng rng(seed);
  std::vector<std::vector<float>> embs(static_cast<std::size_t>(count));
  for (auto& e : embs) {
    e.resize(static_cast<std::size_t>(dim));
    for (auto& v : e) v = static_cast<float>(rng.gaussian());
  }
  return embs;
}

using LossBuilder = std::function<Var(DTape&, const std::map<std::string, Var>&)>;

double eval_loss(const mcx::ModelConfig& cfg, const mcx::ParamMap<double>& params,
                 const LossBuilder& build) {
  DTape tape;
  const auto vars = mcx::bind_params(tape, params, cfg, false);
  return tape.value(build(tape, vars))(0, 0);
}

// Central finite differences on randomly sampled parameter coordinates vs the
// analytic tape gradient. Returns the fraction of coordinates within tol.
double fd_agreement(const mcx::ModelConfig& cfg, const mcx::ParamMap<double>& params,
                    const LossBuilder& build, int n_coords, std::uint64_t seed,
                    double tol = 1e-3) {
  DTape tape;
  const auto vars = mcx::bind_params(tape, params, cfg, true);
  Var loss = build(tape, vars);
  tape.backward(loss);

  std::vector<std::string> names;
  for (const auto& [name, tensor] : params)
    if (tensor.size() > 0) names.push_back(name);

  mcx::Rng rng(seed);
  int ok = 0;
  for (int i = 0; i < n_coords; ++i) {
    const auto& name = names[rng.below(names.size())];
    const Eigen::Index idx =
        static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(params.at(name).size())));
    const double analytic = tape.grad(vars.at(name)).data()[idx];

    const double h = 1e-4;
    mcx::ParamMap<double> up = params, down = params;
    up.at(name).data()[idx] += h;
    down.at(name).data()[idx] -= h;
    const double fd = (eval_loss(cfg, up, build) - eval_loss(cfg, down, build)) / (2.0 * h);

    const double err = std::abs(fd - analytic) / std::max(std::abs(fd) + std::abs(analytic), 1e-4);
    if (err < tol) ++ok;
  }
  return static_cast<double>(ok) / n_coords;
}

void zero_tensors(mcx::ParamMap<float>& params, const std::vector<std::string>& names) {
  for (const auto& n : names) params.at(n).setZero();
}

std::vector<std::string> block_branch_tensors(const std::string& prefix, int num_scales) {
  std::vector<std::string> names = {prefix + ".in.w",          prefix + ".in.prelu",
                                    prefix + ".in.norm.gamma", prefix + ".in.norm.beta",
                                    prefix + ".out.w",         prefix + ".out.prelu",
                                    prefix + ".out.norm.gamma", prefix + ".out.norm.beta"};
  for (int q = 0; q < num_scales; ++q) {
    const std::string d = prefix + ".down" + std::to_string(q) + ".";
    names.insert(names.end(), {d + "w", d + "prelu", d + "norm.gamma", d + "norm.beta"});
  }
  return names;
}

}  // namespace

TEST_CASE("model config validation and json round trip") {
  mcx::ModelConfig cfg = tiny_config(mcx::Conditioning::split);
  cfg.validate();

  const auto j = cfg.to_json();
  const auto back = mcx::ModelConfig::from_json(j);
  CHECK(back.to_json() == j);

  auto bad = j;
  bad["stride_len"] = 4;
  CHECK_THROWS_AS(mcx::ModelConfig::from_json(bad), std::invalid_argument);

  auto odd = cfg;
  odd.stride = 5;  // does not divide 16
  CHECK_THROWS_AS(odd.validate(), std::invalid_argument);
  odd = cfg;
  odd.spectral_dim = 0;
  CHECK_THROWS_AS(odd.validate(), std::invalid_argument);
  odd = cfg;
  odd.max_speakers = 7;
  CHECK_THROWS_AS(odd.validate(), std::invalid_argument);
  odd = cfg;
  odd.spatial_dim = 0;  // spectral-only ablation stays valid
  odd.validate();

  CHECK(mcx::conditioning_from_string("multiply") == mcx::Conditioning::multiply);
  CHECK_THROWS_AS(mcx::conditioning_from_string("banana"), std::invalid_argument);

  CHECK(tiny_config(mcx::Conditioning::none).separator_input_dim() == 12);
  CHECK(tiny_config(mcx::Conditioning::multiply).separator_input_dim() == 12);
  CHECK(tiny_config(mcx::Conditioning::split).separator_input_dim() == 12 + 8);
  CHECK(tiny_config(mcx::Conditioning::concat).separator_input_dim() == 12 + 2 * 8);
}

TEST_CASE("parameter inventory follows the config") {
  const auto split = mcx::param_shapes(tiny_config(mcx::Conditioning::split));
  CHECK(split.at("enc.spec.w") == mcx::TensorShape{16, 8});
  CHECK(split.at("enc.spat.w") == mcx::TensorShape{32, 4});
  CHECK(split.at("sep.bottleneck.w") == mcx::TensorShape{20, 8});
  CHECK(split.at("sep.block1.down0.w") == mcx::TensorShape{5, 16});
  CHECK(split.at("sep.mask.w") == mcx::TensorShape{8, 2 * 12});
  CHECK(split.at("spk.adapt1.w") == mcx::TensorShape{8, 8});
  CHECK(split.at("spk.out.w") == mcx::TensorShape{16, 8});
  CHECK(split.at("dec.w") == mcx::TensorShape{12, 16});
  CHECK(split.at("dec.b") == mcx::TensorShape{1, 1});

  const auto none = mcx::param_shapes(tiny_config(mcx::Conditioning::none));
  CHECK(none.count("spk.bottleneck.w") == 0);
  CHECK(none.at("sep.bottleneck.w") == mcx::TensorShape{12, 8});

  const auto mult = mcx::param_shapes(tiny_config(mcx::Conditioning::multiply));
  CHECK(mult.count("sep.mask.w") == 0);
  CHECK(mult.at("sep.cond.emb.w") == mcx::TensorShape{8, 8});
  CHECK(mult.at("sep.mask.head0.w") == mcx::TensorShape{8, 12});
  CHECK(mult.at("sep.mask.head1.b") == mcx::TensorShape{1, 12});

  auto flat = tiny_config(mcx::Conditioning::none);
  flat.spatial_dim = 0;
  CHECK(mcx::param_shapes(flat).count("enc.spat.w") == 0);
}

TEST_CASE("parameter init is deterministic and role-correct") {
  const auto cfg = tiny_config(mcx::Conditioning::split);
  const auto a = mcx::init_params(cfg, 7);
  const auto b = mcx::init_params(cfg, 7);
  const auto c = mcx::init_params(cfg, 8);

  REQUIRE(a.size() == b.size());
  bool any_differs = false;
  for (const auto& [name, tensor] : a) {
    CHECK(tensor == b.at(name));
    if (tensor != c.at(name)) any_differs = true;
  }
  CHECK(any_differs);

  CHECK((a.at("sep.block0.in.prelu").array() == 0.25f).all());
  CHECK((a.at("sep.norm.gamma").array() == 1.0f).all());
  CHECK((a.at("sep.norm.beta").array() == 0.0f).all());
  CHECK((a.at("sep.mask.b").array() == 0.0f).all());
  CHECK((a.at("dec.b").array() == 0.0f).all());

  const float bound = 1.0f / std::sqrt(16.0f);
  CHECK(a.at("enc.spec.w").cwiseAbs().maxCoeff() <= bound);
  CHECK(a.at("enc.spec.w").cwiseAbs().maxCoeff() > 0.0f);
}

TEST_CASE("parameter checkpoints round-trip bit-exactly") {
  const auto cfg = tiny_config(mcx::Conditioning::split);
  const auto params = mcx::init_params(cfg, 3);
  const fs::path path = fs::temp_directory_path() / "mcx_params_test.ckpt";

  mcx::save_params(path.string(), cfg, params);
  const auto [cfg2, params2] = mcx::load_params(path.string());
  CHECK(cfg2.to_json() == cfg.to_json());
  REQUIRE(params2.size() == params.size());
  for (const auto& [name, tensor] : params) CHECK(tensor == params2.at(name));

  // Re-saving produces byte-identical files.
  const fs::path path2 = fs::temp_directory_path() / "mcx_params_test2.ckpt";
  mcx::save_params(path2.string(), cfg2, params2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  SUBCASE("shape tampering is rejected") {
    mcx::Checkpoint ck = mcx::load_checkpoint(path.string());
    ck.sections["params"]["dec.w"] = Eigen::MatrixXf::Zero(3, 3);
    mcx::save_checkpoint(path.string(), ck);
    CHECK_THROWS_AS(mcx::load_params(path.string()), std::runtime_error);
  }
  SUBCASE("missing tensors are rejected") {
    mcx::Checkpoint ck = mcx::load_checkpoint(path.string());
    ck.sections["params"].erase("dec.w");
    mcx::save_checkpoint(path.string(), ck);
    CHECK_THROWS_AS(mcx::load_params(path.string()), std::runtime_error);
  }
  SUBCASE("garbage files are rejected") {
    std::ofstream bad(path, std::ios::binary | std::ios::trunc);
    bad << "not a checkpoint";
    bad.close();
    CHECK_THROWS_AS(mcx::load_checkpoint(path.string()), std::runtime_error);
  }
  SUBCASE("truncation is detected") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 40));
    out.close();
    CHECK_THROWS_AS(mcx::load_checkpoint(path.string()), std::runtime_error);
  }

  fs::remove(path);
  fs::remove(path2);
}

TEST_CASE("checkpoint meta and multiple sections survive a round trip") {
  mcx::Checkpoint ck;
  ck.meta = {{"step", 17}, {"note", "hello"}};
  ck.sections["alpha"]["t1"] = Eigen::MatrixXf::Random(4, 3);
  ck.sections["alpha"]["t2"] = Eigen::MatrixXf::Random(1, 1);
  ck.sections["beta"]["t1"] = Eigen::MatrixXf::Random(2, 5);

  const fs::path path = fs::temp_directory_path() / "mcx_ck_multi.ckpt";
  mcx::save_checkpoint(path.string(), ck);
  const auto back = mcx::load_checkpoint(path.string());
  CHECK(back.meta == ck.meta);
  REQUIRE(back.sections.size() == 2);
  CHECK(back.sections.at("alpha").at("t1") == ck.sections.at("alpha").at("t1"));
  CHECK(back.sections.at("alpha").at("t2") == ck.sections.at("alpha").at("t2"));
  CHECK(back.sections.at("beta").at("t1") == ck.sections.at("beta").at("t1"));
  fs::remove(path);
}

TEST_CASE("frame algebra") {
  CHECK(mcx::frame_count(16, 16, 8) == 1);
  CHECK(mcx::frame_count(200, 16, 8) == 24);
  CHECK(mcx::frame_count(333, 16, 8) == 40);
  CHECK_THROWS_AS(mcx::frame_count(15, 16, 8), std::invalid_argument);

  std::vector<float> x(40);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<float>(i);
  const auto frames = mcx::frame_rows<double>(x, 16, 8);
  REQUIRE(frames.rows() == 4);
  REQUIRE(frames.cols() == 16);
  CHECK(frames(0, 0) == 0.0);
  CHECK(frames(1, 0) == 8.0);
  CHECK(frames(3, 15) == 39.0);

  mcx::MultiWaveform mw;
  mw.channels = {x, x};
  for (auto& v : mw.channels[1]) v += 100.0f;
  const auto multi = mcx::frame_rows_multi<double>(mw, 16, 8);
  REQUIRE(multi.rows() == 4);
  REQUIRE(multi.cols() == 32);
  CHECK(multi(2, 0) == 16.0);
  CHECK(multi(2, 16) == 116.0);
}

TEST_CASE("spectral encoder matches direct indexing with a hand-set kernel") {
  mcx::ModelConfig cfg = tiny_config(mcx::Conditioning::none);
  cfg.spectral_dim = 1;
  cfg.stride = cfg.kernel_len;  // hop a full kernel

  DTape tape;
  DMat w = DMat::Zero(cfg.kernel_len, 1);
  w(0, 0) = 1.0;
  std::map<std::string, Var> vars;
  vars["enc.spec.w"] = tape.constant(w);
  mcx::ExtractorGraph<double> graph(tape, vars, cfg);

  mcx::Rng rng(5);
  std::vector<float> x(96);
  for (auto& v : x) v = static_cast<float>(rng.gaussian());
  const Var out = graph.spectral_encode(
      tape.constant(mcx::frame_rows<double>(x, cfg.kernel_len, cfg.stride)));

  REQUIRE(tape.value(out).rows() == 6);
  for (int f = 0; f < 6; ++f) {
    const double direct = std::max(0.0, static_cast<double>(x[static_cast<std::size_t>(f) * 16]));
    CHECK(tape.value(out)(f, 0) == direct);
  }

  SUBCASE("zero input gives zero output") {
    const Var zero = graph.spectral_encode(tape.constant(DMat::Zero(4, cfg.kernel_len)));
    CHECK(tape.value(zero).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("one kernel of input gives one frame") {
    std::vector<float> shortest(static_cast<std::size_t>(cfg.kernel_len), 1.0f);
    CHECK(mcx::frame_rows<double>(shortest, cfg.kernel_len, cfg.stride).rows() == 1);
  }
}

TEST_CASE("spatial encoder is a cross-channel detector") {
  mcx::ModelConfig cfg = tiny_config(mcx::Conditioning::none);
  cfg.spatial_dim = 1;

  // Kernel antisymmetric across the two channels: responds only to
  // inter-channel differences.
  DMat w(2 * cfg.kernel_len, 1);
  mcx::Rng rng(6);
  for (int j = 0; j < cfg.kernel_len; ++j) {
    w(j, 0) = rng.gaussian();
    w(cfg.kernel_len + j, 0) = -w(j, 0);
  }

  DTape tape;
  std::map<std::string, Var> vars;
  vars["enc.spat.w"] = tape.constant(w);
  mcx::ExtractorGraph<double> graph(tape, vars, cfg);

  const auto mix = random_mix(1, 200, 7);
  mcx::MultiWaveform same;
  same.channels = {mix.channels[0], mix.channels[0]};
  const Var out = graph.spatial_encode(
      tape.constant(mcx::frame_rows_multi<double>(same, cfg.kernel_len, cfg.stride)));
  // Cancellation is exact term-by-term; the summation order leaves only
  // rounding residue.
  CHECK(tape.value(out).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(tape.value(out).rows() == mcx::frame_count(200, cfg.kernel_len, cfg.stride));

  SUBCASE("disabled spatial encoder rejects calls") {
    mcx::ModelConfig flat = cfg;
    flat.spatial_dim = 0;
    mcx::ExtractorGraph<double> g2(tape, vars, flat);
    CHECK_THROWS_AS(g2.spatial_encode(out), std::invalid_argument);
  }
}

TEST_CASE("residual blocks collapse to the identity with zero branches") {
  const auto cfg = tiny_config(mcx::Conditioning::split);
  auto params = mcx::init_params(cfg, 1);
  zero_tensors(params, {"spk.tcn.in.w", "spk.tcn.in.prelu", "spk.tcn.in.norm.gamma",
                        "spk.tcn.in.norm.beta", "spk.tcn.dw.w", "spk.tcn.dw.prelu",
                        "spk.tcn.dw.norm.gamma", "spk.tcn.dw.norm.beta", "spk.tcn.out.w"});
  zero_tensors(params, block_branch_tensors("sep.block0", cfg.num_scales));

  DTape tape;
  const auto vars = mcx::bind_params(tape, mcx::cast_params<double>(params), cfg, false);
  mcx::ExtractorGraph<double> graph(tape, vars, cfg);

  mcx::Rng rng(9);
  DMat x(12, cfg.channels);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();

  const Var tcn = graph.tcn_block("spk.tcn", tape.constant(x), 1);
  CHECK(tape.value(tcn) == x);

  const Var ucb = graph.u_conv_block("sep.block0", tape.constant(x));
  CHECK(tape.value(ucb) == x);
}

TEST_CASE("tcn block keeps the frame count for every dilation") {
  const auto cfg = tiny_config(mcx::Conditioning::split);
  const auto params = mcx::cast_params<double>(mcx::init_params(cfg, 2));
  DTape tape;
  const auto vars = mcx::bind_params(tape, params, cfg, false);
  mcx::ExtractorGraph<double> graph(tape, vars, cfg);

  mcx::Rng rng(10);
  DMat x(9, cfg.channels);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
  for (int dilation : {1, 2, 4}) {
    const Var out = graph.tcn_block("spk.tcn", tape.constant(x), dilation);
    CHECK(tape.value(out).rows() == 9);
    CHECK(tape.value(out).cols() == cfg.channels);
  }
  CHECK_THROWS_AS(graph.tcn_block("spk.tcn", tape.constant(x), 0), std::invalid_argument);
}

TEST_CASE("resampling block keeps shape across odd frame counts") {
  mcx::ModelConfig cfg = tiny_config(mcx::Conditioning::none);
  cfg.num_scales = 4;
  const auto params = mcx::cast_params<double>(mcx::init_params(cfg, 3));
  DTape tape;
  const auto vars = mcx::bind_params(tape, params, cfg, false);
  mcx::ExtractorGraph<double> graph(tape, vars, cfg);

  mcx::Rng rng(11);
  for (int frames : {16, 17, 33}) {
    DMat x(frames, cfg.channels);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
    const Var out = graph.u_conv_block("sep.block0", tape.constant(x));
    CHECK(tape.value(out).rows() == frames);
    CHECK(tape.value(out).cols() == cfg.channels);
  }

  DMat shallow(15, cfg.channels);
  shallow.setZero();
  CHECK_THROWS_AS(graph.u_conv_block("sep.block0", tape.constant(shallow)),
                  std::invalid_argument);
}

TEST_CASE("block gradients pass finite-difference checks") {
  mcx::ModelConfig cfg = tiny_config(mcx::Conditioning::split);
  cfg.channels = 4;
  cfg.expanded_channels = 8;
  const auto params = mcx::cast_params<double>(mcx::init_params(cfg, 4));

  mcx::Rng rng(12);
  DMat x(12, cfg.channels);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
  DMat probe(12, cfg.channels);
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe.data()[i] = rng.gaussian();

  const LossBuilder tcn_loss = [&](DTape& t, const std::map<std::string, Var>& vars) {
    mcx::ExtractorGraph<double> graph(t, vars, cfg);
    return t.dot(graph.tcn_block("spk.tcn", t.constant(x), 2), t.constant(probe));
  };
  CHECK(fd_agreement(cfg, params, tcn_loss, 60, 101, 1e-4) == 1.0);

  const LossBuilder ucb_loss = [&](DTape& t, const std::map<std::string, Var>& vars) {
    mcx::ExtractorGraph<double> graph(t, vars, cfg);
    return t.dot(graph.u_conv_block("sep.block1", t.constant(x)), t.constant(probe));
  };
  CHECK(fd_agreement(cfg, params, ucb_loss, 60, 102, 1e-4) >= 0.99);
}

TEST_CASE("separator emits sigmoid masks per slot") {
  for (auto mode : {mcx::Conditioning::none, mcx::Conditioning::concat,
                    mcx::Conditioning::split, mcx::Conditioning::multiply}) {
    const auto cfg = tiny_config(mode);
    const auto params = mcx::cast_params<double>(mcx::init_params(cfg, 5));
    DTape tape;
    const auto vars = mcx::bind_params(tape, params, cfg, false);
    mcx::ExtractorGraph<double> graph(tape, vars, cfg);

    mcx::Rng rng(13);
    DMat y(16, cfg.separator_input_dim());
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.gaussian();

    std::vector<Var> gates;
    if (mode == mcx::Conditioning::multiply)
      for (int k = 0; k < cfg.max_speakers; ++k) {
        DMat g(1, cfg.channels);
        for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.gaussian();
        gates.push_back(tape.constant(g));
      }

    const auto masks = graph.separator(tape.constant(y), gates);
    REQUIRE(static_cast<int>(masks.size()) == cfg.max_speakers);
    for (Var m : masks) {
      CHECK(tape.value(m).rows() == 16);
      CHECK(tape.value(m).cols() == cfg.feature_dim());
      CHECK(tape.value(m).minCoeff() > 0.0);
      CHECK(tape.value(m).maxCoeff() < 1.0);
    }

    DMat wrong(16, cfg.separator_input_dim() + 1);
    wrong.setZero();
    CHECK_THROWS_AS(graph.separator(tape.constant(wrong), gates), std::invalid_argument);
  }
}

TEST_CASE("separator rejects mismatched gate lists") {
  const auto cfg = tiny_config(mcx::Conditioning::multiply);
  const auto params = mcx::cast_params<double>(mcx::init_params(cfg, 6));
  DTape tape;
  const auto vars = mcx::bind_params(tape, params, cfg, false);
  mcx::ExtractorGraph<double> graph(tape, vars, cfg);
  DMat y = DMat::Zero(16, cfg.separator_input_dim());
  CHECK_THROWS_AS(graph.separator(tape.constant(y), {}), std::invalid_argument);

  const auto cfg2 = tiny_config(mcx::Conditioning::none);
  const auto params2 = mcx::cast_params<double>(mcx::init_params(cfg2, 6));
  DTape tape2;
  const auto vars2 = mcx::bind_params(tape2, params2, cfg2, false);
  mcx::ExtractorGraph<double> graph2(tape2, vars2, cfg2);
  DMat y2 = DMat::Zero(16, cfg2.separator_input_dim());
  CHECK_THROWS_AS(graph2.separator(tape2.constant(y2), {tape2.constant(DMat::Ones(1, 8))}),
                  std::invalid_argument);
}

TEST_CASE("degenerate single-slot extractor still runs") {
  mcx::ModelConfig cfg = tiny_config(mcx::Conditioning::none);
  cfg.max_speakers = 1;
  const auto params = mcx::init_params(cfg, 14);
  const auto outs = run_extractor(cfg, params, random_mix(2, 200, 15), {});
  REQUIRE(outs.size() == 1);
  CHECK(outs[0].samples.size() == 200);
}

TEST_CASE("pointwise layers commute with frame permutation") {
  const auto cfg = tiny_config(mcx::Conditioning::none);
  const auto params = mcx::cast_params<double>(mcx::init_params(cfg, 16));
  DTape tape;
  const auto vars = mcx::bind_params(tape, params, cfg, false);

  mcx::Rng rng(17);
  DMat y(10, cfg.separator_input_dim());
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.gaussian();
  std::vector<int> perm(10);
  for (int i = 0; i < 10; ++i) perm[static_cast<std::size_t>(i)] = i;
  mcx::fisher_yates(perm, rng);
  DMat yp(10, y.cols());
  for (int i = 0; i < 10; ++i) yp.row(i) = y.row(perm[static_cast<std::size_t>(i)]);

  const Var base = tape.matmul(tape.constant(y), vars.at("sep.bottleneck.w"));
  const Var permuted = tape.matmul(tape.constant(yp), vars.at("sep.bottleneck.w"));
  for (int i = 0; i < 10; ++i)
    CHECK(tape.value(permuted).row(i) == tape.value(base).row(perm[static_cast<std::size_t>(i)]));
}

TEST_CASE("speaker stack output is zero for zero embeddings") {
  const auto cfg = tiny_config(mcx::Conditioning::split);
  const auto params = mcx::cast_params<double>(mcx::init_params(cfg, 18));
  DTape tape;
  const auto vars = mcx::bind_params(tape, params, cfg, false);
  mcx::ExtractorGraph<double> graph(tape, vars, cfg);

  mcx::Rng rng(19);
  DMat y(14, cfg.feature_dim());
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.gaussian();

  std::vector<Var> zero_embs = {tape.constant(DMat::Zero(1, cfg.embedding_dim)),
                                tape.constant(DMat::Zero(1, cfg.embedding_dim))};
  const Var out = graph.speaker_stack(tape.constant(y), zero_embs);
  CHECK(tape.value(out).rows() == 14);
  CHECK(tape.value(out).cols() == cfg.speaker_dim);
  CHECK(tape.value(out).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(graph.speaker_stack(tape.constant(y), {zero_embs[0]}), std::invalid_argument);
  std::vector<Var> bad = {zero_embs[0], tape.constant(DMat::Zero(1, cfg.embedding_dim + 1))};
  CHECK_THROWS_AS(graph.speaker_stack(tape.constant(y), bad), std::invalid_argument);
}

TEST_CASE("speaker stack gradients flow into the embeddings") {
  const auto cfg = tiny_config(mcx::Conditioning::split);
  const auto params = mcx::cast_params<double>(mcx::init_params(cfg, 20));

  mcx::Rng rng(21);
  DMat y(12, cfg.feature_dim());
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = rng.gaussian();
  DMat probe(12, cfg.speaker_dim);
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe.data()[i] = rng.gaussian();
  DMat e0(1, cfg.embedding_dim), e1(1, cfg.embedding_dim);
  for (Eigen::Index i = 0; i < e0.size(); ++i) e0.data()[i] = rng.gaussian();
  for (Eigen::Index i = 0; i < e1.size(); ++i) e1.data()[i] = rng.gaussian();

  auto run = [&](const DMat& a, const DMat& b, DMat* grad_a) {
    DTape tape;
    const auto vars = mcx::bind_params(tape, params, cfg, false);
    mcx::ExtractorGraph<double> graph(tape, vars, cfg);
    const Var ea = tape.leaf(a, true), eb = tape.leaf(b, false);
    const Var loss =
        tape.dot(graph.speaker_stack(tape.constant(y), {ea, eb}), tape.constant(probe));
    if (grad_a) {
      tape.backward(loss);
      *grad_a = tape.grad(ea);
    }
    return tape.value(loss)(0, 0);
  };

  DMat analytic;
  run(e0, e1, &analytic);
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < e0.size(); ++i) {
    DMat up = e0, down = e0;
    up.data()[i] += h;
    down.data()[i] -= h;
    const double fd = (run(up, e1, nullptr) - run(down, e1, nullptr)) / (2.0 * h);
    CHECK(analytic.data()[i] == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("decoder length algebra and zero behavior") {
  const auto cfg = tiny_config(mcx::Conditioning::none);
  const auto params = mcx::cast_params<double>(mcx::init_params(cfg, 22));
  DTape tape;
  const auto vars = mcx::bind_params(tape, params, cfg, false);
  mcx::ExtractorGraph<double> graph(tape, vars, cfg);

  const Var zero = graph.decode(tape.constant(DMat::Zero(1, cfg.feature_dim())), 16);
  CHECK(tape.value(zero).rows() == 16);
  CHECK(tape.value(zero).cwiseAbs().maxCoeff() == 0.0);  // zero-init decoder bias

  // 40 frames decode to 328 samples; padding fills the tail up to 333.
  mcx::Rng rng(23);
  DMat rep(40, cfg.feature_dim());
  for (Eigen::Index i = 0; i < rep.size(); ++i) rep.data()[i] = rng.gaussian();
  const Var padded = graph.decode(tape.constant(rep), 333);
  CHECK(tape.value(padded).rows() == 333);
  for (int i = 328; i < 333; ++i) CHECK(tape.value(padded)(i, 0) == 0.0);

  const Var trimmed = graph.decode(tape.constant(rep), 320);
  CHECK(tape.value(trimmed).rows() == 320);
  CHECK(tape.value(trimmed)(0, 0) == tape.value(padded)(8, 0));
}

TEST_CASE("forward honors the shape contract in every mode") {
  for (auto mode : {mcx::Conditioning::none, mcx::Conditioning::multiply,
                    mcx::Conditioning::concat, mcx::Conditioning::split}) {
    const auto cfg = tiny_config(mode);
    const auto params = mcx::init_params(cfg, 24);
    const auto embs = random_embeddings(cfg.max_speakers, cfg.embedding_dim, 25);
    for (int T : {200, 333, 1600}) {
      const auto mix = random_mix(cfg.num_mics, T, 26);
      const auto outs = run_extractor(
          cfg, params, mix, mode == mcx::Conditioning::none ? decltype(embs){} : embs);
      REQUIRE(static_cast<int>(outs.size()) == cfg.max_speakers);
      for (const auto& w : outs) {
        CHECK(static_cast<int>(w.samples.size()) == T);
        for (float v : w.samples) CHECK(std::isfinite(v));
      }
    }
  }
}

TEST_CASE("spectral-only ablation runs without spatial tensors") {
  mcx::ModelConfig cfg = tiny_config(mcx::Conditioning::split);
  cfg.spatial_dim = 0;
  const auto params = mcx::init_params(cfg, 27);
  const auto embs = random_embeddings(cfg.max_speakers, cfg.embedding_dim, 28);
  const auto outs = run_extractor(cfg, params, random_mix(2, 400, 29), embs);
  REQUIRE(outs.size() == 2);
  CHECK(outs[0].samples.size() == 400);
}

TEST_CASE("forward rejects inconsistent conditioning inputs") {
  const auto none_cfg = tiny_config(mcx::Conditioning::none);
  const auto none_params = mcx::init_params(none_cfg, 30);
  const auto mix = random_mix(2, 200, 31);
  const auto embs = random_embeddings(2, 8, 32);

  CHECK_THROWS_AS(run_extractor(none_cfg, none_params, mix, embs), std::invalid_argument);

  const auto split_cfg = tiny_config(mcx::Conditioning::split);
  const auto split_params = mcx::init_params(split_cfg, 33);
  CHECK_THROWS_AS(run_extractor(split_cfg, split_params, mix, {}), std::invalid_argument);
  CHECK_THROWS_AS(run_extractor(split_cfg, split_params, mix, {embs[0]}), std::invalid_argument);

  auto short_emb = embs;
  short_emb[1].pop_back();
  CHECK_THROWS_AS(run_extractor(split_cfg, split_params, mix, short_emb), std::invalid_argument);

  CHECK_THROWS_AS(run_extractor(split_cfg, split_params, random_mix(3, 200, 34), embs),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_extractor(split_cfg, split_params, random_mix(2, 8, 35), embs),
                  std::invalid_argument);
}

TEST_CASE("forward is deterministic") {
  const auto cfg = tiny_config(mcx::Conditioning::split);
  const auto params = mcx::init_params(cfg, 36);
  const auto embs = random_embeddings(2, cfg.embedding_dim, 37);
  const auto mix = random_mix(2, 256, 38);
  const auto a = run_extractor(cfg, params, mix, embs);
  const auto b = run_extractor(cfg, params, mix, embs);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k].samples == b[k].samples);
}

TEST_CASE("full pipeline gradients agree with finite differences") {
  const auto cfg = tiny_config(mcx::Conditioning::split);
  const auto params = mcx::cast_params<double>(mcx::init_params(cfg, 39));
  const auto mix = random_mix(2, 200, 40);
  const auto embs = random_embeddings(2, cfg.embedding_dim, 41);

  mcx::Rng rng(42);
  std::vector<DMat> refs;
  for (int k = 0; k < 2; ++k) {
    DMat r(200, 1);
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = 0.5 * rng.gaussian();
    refs.push_back(r);
  }

  const LossBuilder loss = [&](DTape& t, const std::map<std::string, Var>& vars) {
    mcx::ExtractorGraph<double> graph(t, vars, cfg);
    return mcx::fixed_order_loss_var(t, graph.forward(mix, embs), refs);
  };
  CHECK(fd_agreement(cfg, params, loss, 50, 103) >= 0.98);
}
