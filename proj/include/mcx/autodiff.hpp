// include/mcx/autodiff.hpp
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

#ifndef MCX_AUTODIFF_HPP
#define MCX_AUTODIFF_HPP

#include <Eigen/Dense>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mcx::ad {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// Handle into a Tape. Only valid for the tape that produced it.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense matrices. Feature maps are frames x channels;
// waveforms are T x 1; scalars are 1 x 1. One tape per forward+backward pass.
template <typename S>
class Tape {
  enum Op : std::uint8_t {
    kLeaf,
    kMatmul,
    kAdd,
    kSub,
    kCMul,
    kScale,
    kAddRowVec,
    kMulRowVec,
    kRelu,
    kPRelu,
    kSigmoid,
    kChannelNorm,
    kInstanceNorm,
    kDepthwise3,
    kDown5,
    kUp2,
    kConcatCols,
    kSliceCols,
    kSliceRows,
    kPadRows,
    kTileRows,
    kOverlapAdd,
    kSum,
    kDot,
    kColMean,
    kScaleByScalar,
    kSiSnrDb,
    kSoftmaxCE,
  };

  struct Node {
    Mat<S> val;
    Mat<S> grad;  // empty until touched by backward
    Mat<S> aux;   // op-scratch saved by forward (normalized values, softmax, ...)
    Mat<S> aux2;
    Var a, b, c;
    Op op = kLeaf;
    bool needs_grad = false;
    int i0 = 0, i1 = 0;
    S s0 = S(0);
  };

 public:
  Tape() { nodes_.reserve(512); }

  std::size_t size() const { return nodes_.size(); }

  Var leaf(Mat<S> value, bool needs_grad) {
    Node n;
    n.val = std::move(value);
    n.needs_grad = needs_grad;
    return push(std::move(n));
  }

  Var constant(Mat<S> value) { return leaf(std::move(value), false); }

  Var scalar(S value, bool needs_grad = false) {
    Mat<S> m(1, 1);
    m(0, 0) = value;
    return leaf(std::move(m), needs_grad);
  }

  const Mat<S>& value(Var v) const { return node(v).val; }

  // Gradient after backward(); zeros if the node was never reached.
  Mat<S> grad(Var v) const {
    const Node& n = node(v);
    if (n.grad.size() == 0) return Mat<S>::Zero(n.val.rows(), n.val.cols());
    return n.grad;
  }

  // ---- ops ----------------------------------------------------------------

  Var matmul(Var a, Var b) {
    assert(node(a).val.cols() == node(b).val.rows());
    Node n = binary(kMatmul, a, b);
    n.val.noalias() = node(a).val * node(b).val;
    return push(std::move(n));
  }

  Var add(Var a, Var b) {
    assert_same_shape(a, b);
    Node n = binary(kAdd, a, b);
    n.val = node(a).val + node(b).val;
    return push(std::move(n));
  }

  Var sub(Var a, Var b) {
    assert_same_shape(a, b);
    Node n = binary(kSub, a, b);
    n.val = node(a).val - node(b).val;
    return push(std::move(n));
  }

  Var cmul(Var a, Var b) {
    assert_same_shape(a, b);
    Node n = binary(kCMul, a, b);
    n.val = node(a).val.cwiseProduct(node(b).val);
    return push(std::move(n));
  }

  Var scale(Var a, S k) {
    Node n = unary(kScale, a);
    n.s0 = k;
    n.val = node(a).val * k;
    return push(std::move(n));
  }

  // x (F x C) + row vector v (1 x C) broadcast over rows.
  Var add_row_vec(Var x, Var v) {
    assert(node(v).val.rows() == 1 && node(v).val.cols() == node(x).val.cols());
    Node n = binary(kAddRowVec, x, v);
    n.val = (node(x).val.array().rowwise() + node(v).val.row(0).array()).matrix();
    return push(std::move(n));
  }

  // x (F x C) * row vector v (1 x C) broadcast over rows.
  Var mul_row_vec(Var x, Var v) {
    assert(node(v).val.rows() == 1 && node(v).val.cols() == node(x).val.cols());
    Node n = binary(kMulRowVec, x, v);
    n.val = (node(x).val.array().rowwise() * node(v).val.row(0).array()).matrix();
    return push(std::move(n));
  }

  Var relu(Var x) {
    Node n = unary(kRelu, x);
    n.val = node(x).val.cwiseMax(S(0));
    return push(std::move(n));
  }

  // slopes: 1 x C, one slope per channel.
  Var prelu(Var x, Var slopes) {
    assert(node(slopes).val.rows() == 1 && node(slopes).val.cols() == node(x).val.cols());
    Node n = binary(kPRelu, x, slopes);
    const Mat<S>& in = node(x).val;
    n.val = in;
    for (Eigen::Index c = 0; c < in.cols(); ++c) {
      const S a = node(slopes).val(0, c);
      for (Eigen::Index f = 0; f < in.rows(); ++f)
        if (in(f, c) < S(0)) n.val(f, c) = a * in(f, c);
    }
    return push(std::move(n));
  }

  Var sigmoid(Var x) {
    Node n = unary(kSigmoid, x);
    n.val = (S(1) / (S(1) + (-node(x).val.array()).exp())).matrix();
    return push(std::move(n));
  }

  // Per-frame normalization across channels, learnable affine.
  Var channel_norm(Var x, Var gamma, Var beta, S eps) {
    return norm_impl(kChannelNorm, x, gamma, beta, eps);
  }

  // Per-channel normalization across frames (time axis), learnable affine.
  Var instance_norm(Var x, Var gamma, Var beta, S eps) {
    return norm_impl(kInstanceNorm, x, gamma, beta, eps);
  }

  // Depthwise temporal conv, kernel 3, symmetric zero padding. w: 3 x C.
  Var depthwise3(Var x, Var w, int dilation) {
    assert(node(w).val.rows() == 3 && node(w).val.cols() == node(x).val.cols());
    Node n = binary(kDepthwise3, x, w);
    n.i0 = dilation;
    const Mat<S>& in = node(x).val;
    const Mat<S>& k = node(w).val;
    const Eigen::Index F = in.rows(), C = in.cols(), d = dilation;
    n.val.setZero(F, C);
    for (Eigen::Index c = 0; c < C; ++c) {
      const S w0 = k(0, c), w1 = k(1, c), w2 = k(2, c);
      for (Eigen::Index f = 0; f < F; ++f) {
        S acc = w1 * in(f, c);
        if (f - d >= 0) acc += w0 * in(f - d, c);
        if (f + d < F) acc += w2 * in(f + d, c);
        n.val(f, c) = acc;
      }
    }
    return push(std::move(n));
  }

  // Depthwise stride-2 downsampling conv, kernel 5, padding 2. w: 5 x C.
  // Output has ceil(F/2) frames.
  Var downsample5(Var x, Var w) {
    assert(node(w).val.rows() == 5 && node(w).val.cols() == node(x).val.cols());
    Node n = binary(kDown5, x, w);
    const Mat<S>& in = node(x).val;
    const Mat<S>& k = node(w).val;
    const Eigen::Index F = in.rows(), C = in.cols();
    const Eigen::Index G = (F + 1) / 2;
    n.val.setZero(G, C);
    for (Eigen::Index c = 0; c < C; ++c) {
      for (Eigen::Index g = 0; g < G; ++g) {
        S acc = S(0);
        const Eigen::Index base = 2 * g - 2;
        for (Eigen::Index j = 0; j < 5; ++j) {
          const Eigen::Index t = base + j;
          if (t >= 0 && t < F) acc += k(j, c) * in(t, c);
        }
        n.val(g, c) = acc;
      }
    }
    return push(std::move(n));
  }

  // Nearest-neighbor x2 upsampling along frames, truncated to target_frames.
  Var upsample2(Var x, int target_frames) {
    const Mat<S>& in = node(x).val;
    assert(target_frames <= 2 * in.rows() && target_frames >= in.rows());
    Node n = unary(kUp2, x);
    n.i0 = target_frames;
    n.val.resize(target_frames, in.cols());
    for (Eigen::Index f = 0; f < target_frames; ++f) n.val.row(f) = in.row(f / 2);
    return push(std::move(n));
  }

  Var concat_cols(Var a, Var b) {
    assert(node(a).val.rows() == node(b).val.rows());
    Node n = binary(kConcatCols, a, b);
    n.val.resize(node(a).val.rows(), node(a).val.cols() + node(b).val.cols());
    n.val.leftCols(node(a).val.cols()) = node(a).val;
    n.val.rightCols(node(b).val.cols()) = node(b).val;
    return push(std::move(n));
  }

  Var slice_cols(Var x, int first, int count) {
    assert(first >= 0 && first + count <= node(x).val.cols());
    Node n = unary(kSliceCols, x);
    n.i0 = first;
    n.i1 = count;
    n.val = node(x).val.middleCols(first, count);
    return push(std::move(n));
  }

  Var slice_rows(Var x, int first, int count) {
    assert(first >= 0 && first + count <= node(x).val.rows());
    Node n = unary(kSliceRows, x);
    n.i0 = first;
    n.i1 = count;
    n.val = node(x).val.middleRows(first, count);
    return push(std::move(n));
  }

  // Append pad zero rows.
  Var pad_rows(Var x, int pad) {
    assert(pad >= 0);
    Node n = unary(kPadRows, x);
    n.i0 = pad;
    n.val.setZero(node(x).val.rows() + pad, node(x).val.cols());
    n.val.topRows(node(x).val.rows()) = node(x).val;
    return push(std::move(n));
  }

  // Repeat a 1 x C row vector over `rows` rows.
  Var tile_rows(Var v, int rows) {
    assert(node(v).val.rows() == 1);
    Node n = unary(kTileRows, v);
    n.i0 = rows;
    n.val = node(v).val.replicate(rows, 1);
    return push(std::move(n));
  }

  // Transposed-conv decode: rep (F x D) * w (D x L) overlap-added at `stride`,
  // plus scalar bias. Output: ((F-1)*stride + L) x 1.
  Var overlap_add(Var rep, Var w, Var bias, int stride) {
    assert(node(rep).val.cols() == node(w).val.rows());
    assert(node(bias).val.size() == 1);
    Node n;
    n.op = kOverlapAdd;
    n.a = rep;
    n.b = w;
    n.c = bias;
    n.needs_grad = node(rep).needs_grad || node(w).needs_grad || node(bias).needs_grad;
    n.i0 = stride;
    const Eigen::Index F = node(rep).val.rows();
    const Eigen::Index L = node(w).val.cols();
    Mat<S> frames;
    frames.noalias() = node(rep).val * node(w).val;  // F x L
    const Eigen::Index T = (F - 1) * stride + L;
    n.val.setConstant(T, 1, node(bias).val(0, 0));
    for (Eigen::Index f = 0; f < F; ++f)
      n.val.col(0).segment(f * stride, L) += frames.row(f).transpose();
    return push(std::move(n));
  }

  Var sum(Var x) {
    Node n = unary(kSum, x);
    n.val.setConstant(1, 1, node(x).val.sum());
    return push(std::move(n));
  }

  Var dot(Var a, Var b) {
    assert_same_shape(a, b);
    Node n = binary(kDot, a, b);
    n.val.setConstant(1, 1, node(a).val.cwiseProduct(node(b).val).sum());
    return push(std::move(n));
  }

  // Mean over rows -> 1 x C.
  Var col_mean(Var x) {
    Node n = unary(kColMean, x);
    n.val = node(x).val.colwise().mean();
    return push(std::move(n));
  }

  // a (any shape) scaled by scalar var s (1 x 1).
  Var scale_by_scalar(Var a, Var s) {
    assert(node(s).val.size() == 1);
    Node n = binary(kScaleByScalar, a, s);
    n.val = node(a).val * node(s).val(0, 0);
    return push(std::move(n));
  }

  // 10*log10(st / (en + eps)) clamped to [-60, +60]; st = 0 maps to -60.
  // Gradients are zero in the clamped regions.
  Var si_snr_db(Var st, Var en, S eps) {
    assert(node(st).val.size() == 1 && node(en).val.size() == 1);
    Node n = binary(kSiSnrDb, st, en);
    n.s0 = eps;
    const S stv = node(st).val(0, 0);
    const S env = node(en).val(0, 0) + eps;
    S db;
    if (stv <= S(0)) {
      db = S(-60);
    } else {
      db = S(10) * std::log10(stv / env);
      if (db < S(-60)) db = S(-60);
      if (db > S(60)) db = S(60);
    }
    n.val.setConstant(1, 1, db);
    return push(std::move(n));
  }

  // Cross entropy of softmax(logits) against `label`; logits: 1 x n.
  Var softmax_cross_entropy(Var logits, int label) {
    const Mat<S>& z = node(logits).val;
    assert(z.rows() == 1 && label >= 0 && label < z.cols());
    Node n = unary(kSoftmaxCE, logits);
    n.i0 = label;
    const S m = z.maxCoeff();
    Mat<S> e = (z.array() - m).exp();
    const S Z = e.sum();
    n.aux = e / Z;  // softmax row, saved for backward
    n.val.setConstant(1, 1, std::log(Z) + m - z(0, label));
    return push(std::move(n));
  }

  // ---- backward -----------------------------------------------------------

  void backward(Var root) {
    Node& r = node_mut(root);
    if (r.val.size() != 1) throw std::logic_error("backward: root must be scalar");
    touch(root).setConstant(1, 1, S(1));
    for (std::int32_t i = root.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.needs_grad || n.grad.size() == 0 || n.op == kLeaf) continue;
      step_backward(n);
    }
  }

 private:
  std::vector<Node> nodes_;

  const Node& node(Var v) const {
    assert(v.valid() && static_cast<std::size_t>(v.id) < nodes_.size());
    return nodes_[static_cast<std::size_t>(v.id)];
  }
  Node& node_mut(Var v) { return nodes_[static_cast<std::size_t>(v.id)]; }

  void assert_same_shape([[maybe_unused]] Var a, [[maybe_unused]] Var b) const {
    assert(node(a).val.rows() == node(b).val.rows() &&
           node(a).val.cols() == node(b).val.cols());
  }

  Node unary(Op op, Var a) {
    Node n;
    n.op = op;
    n.a = a;
    n.needs_grad = node(a).needs_grad;
    return n;
  }

  Node binary(Op op, Var a, Var b) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.needs_grad = node(a).needs_grad || node(b).needs_grad;
    return n;
  }

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  // Gradient buffer of v, zero-initialized on first touch.
  Mat<S>& touch(Var v) {
    Node& n = node_mut(v);
    if (n.grad.size() == 0) n.grad.setZero(n.val.rows(), n.val.cols());
    return n.grad;
  }

  bool wants(Var v) const { return v.valid() && node(v).needs_grad; }

  Var norm_impl(Op op, Var x, Var gamma, Var beta, S eps) {
    assert(node(gamma).val.rows() == 1 && node(beta).val.rows() == 1);
    assert(node(gamma).val.cols() == node(x).val.cols());
    assert(node(beta).val.cols() == node(x).val.cols());
    Node n;
    n.op = op;
    n.a = x;
    n.b = gamma;
    n.c = beta;
    n.needs_grad = node(x).needs_grad || node(gamma).needs_grad || node(beta).needs_grad;
    n.s0 = eps;
    const Mat<S>& in = node(x).val;
    if (op == kChannelNorm) {
      Mat<S> mu = in.rowwise().mean();                                    // F x 1  (matrix op)
      Mat<S> xc = in.colwise() - mu.col(0);                               // F x C
      Mat<S> var = xc.array().square().rowwise().mean().matrix();        // F x 1
      n.aux2 = (var.array() + eps).rsqrt().matrix();                      // F x 1
      n.aux = (xc.array().colwise() * n.aux2.col(0).array()).matrix();    // xhat
    } else {
      Mat<S> mu = in.colwise().mean();                                    // 1 x C
      Mat<S> xc = in.rowwise() - mu.row(0);                               // F x C
      Mat<S> var = xc.array().square().colwise().mean().matrix();        // 1 x C
      n.aux2 = (var.array() + eps).rsqrt().matrix();                      // 1 x C
      n.aux = (xc.array().rowwise() * n.aux2.row(0).array()).matrix();    // xhat
    }
    n.val = ((n.aux.array().rowwise() * node(gamma).val.row(0).array()).rowwise() +
             node(beta).val.row(0).array())
                .matrix();
    return push(std::move(n));
  }

  void step_backward(Node& n) {
    const Mat<S>& g = n.grad;
    switch (n.op) {
      case kLeaf:
        break;
      case kMatmul: {
        if (wants(n.a)) touch(n.a).noalias() += g * node(n.b).val.transpose();
        if (wants(n.b)) touch(n.b).noalias() += node(n.a).val.transpose() * g;
        break;
      }
      case kAdd: {
        if (wants(n.a)) touch(n.a) += g;
        if (wants(n.b)) touch(n.b) += g;
        break;
      }
      case kSub: {
        if (wants(n.a)) touch(n.a) += g;
        if (wants(n.b)) touch(n.b) -= g;
        break;
      }
      case kCMul: {
        if (wants(n.a)) touch(n.a) += g.cwiseProduct(node(n.b).val);
        if (wants(n.b)) touch(n.b) += g.cwiseProduct(node(n.a).val);
        break;
      }
      case kScale: {
        if (wants(n.a)) touch(n.a) += g * n.s0;
        break;
      }
      case kAddRowVec: {
        if (wants(n.a)) touch(n.a) += g;
        if (wants(n.b)) touch(n.b) += g.colwise().sum();
        break;
      }
      case kMulRowVec: {
        if (wants(n.a))
          touch(n.a) += (g.array().rowwise() * node(n.b).val.row(0).array()).matrix();
        if (wants(n.b))
          touch(n.b) += g.cwiseProduct(node(n.a).val).colwise().sum();
        break;
      }
      case kRelu: {
        if (wants(n.a)) {
          const Mat<S>& in = node(n.a).val;
          touch(n.a) += (in.array() > S(0)).template cast<S>().matrix().cwiseProduct(g);
        }
        break;
      }
      case kPRelu: {
        const Mat<S>& in = node(n.a).val;
        const Mat<S>& a = node(n.b).val;
        if (wants(n.a)) {
          Mat<S>& gx = touch(n.a);
          for (Eigen::Index c = 0; c < in.cols(); ++c)
            for (Eigen::Index f = 0; f < in.rows(); ++f)
              gx(f, c) += g(f, c) * (in(f, c) >= S(0) ? S(1) : a(0, c));
        }
        if (wants(n.b)) {
          Mat<S>& ga = touch(n.b);
          for (Eigen::Index c = 0; c < in.cols(); ++c) {
            S acc = S(0);
            for (Eigen::Index f = 0; f < in.rows(); ++f)
              if (in(f, c) < S(0)) acc += g(f, c) * in(f, c);
            ga(0, c) += acc;
          }
        }
        break;
      }
      case kSigmoid: {
        if (wants(n.a))
          touch(n.a) += g.cwiseProduct(
              (n.val.array() * (S(1) - n.val.array())).matrix());
        break;
      }
      case kChannelNorm:
      case kInstanceNorm: {
        const Mat<S>& gamma = node(n.b).val;
        const Mat<S>& xhat = n.aux;
        Mat<S> gh = (g.array().rowwise() * gamma.row(0).array()).matrix();  // g * gamma
        if (wants(n.c)) touch(n.c) += g.colwise().sum();
        if (wants(n.b)) touch(n.b) += g.cwiseProduct(xhat).colwise().sum();
        if (wants(n.a)) {
          if (n.op == kChannelNorm) {
            Mat<S> m1 = gh.rowwise().mean();                         // F x 1
            Mat<S> m2 = gh.cwiseProduct(xhat).rowwise().mean();      // F x 1
            Mat<S> dx = gh;
            dx.colwise() -= m1.col(0);
            dx -= (xhat.array().colwise() * m2.col(0).array()).matrix();
            touch(n.a) += (dx.array().colwise() * n.aux2.col(0).array()).matrix();
          } else {
            Mat<S> m1 = gh.colwise().mean();                         // 1 x C
            Mat<S> m2 = gh.cwiseProduct(xhat).colwise().mean();      // 1 x C
            Mat<S> dx = gh;
            dx.rowwise() -= m1.row(0);
            dx -= (xhat.array().rowwise() * m2.row(0).array()).matrix();
            touch(n.a) += (dx.array().rowwise() * n.aux2.row(0).array()).matrix();
          }
        }
        break;
      }
      case kDepthwise3: {
        const Mat<S>& in = node(n.a).val;
        const Mat<S>& k = node(n.b).val;
        const Eigen::Index F = in.rows(), C = in.cols(), d = n.i0;
        if (wants(n.a)) {
          Mat<S>& gx = touch(n.a);
          for (Eigen::Index c = 0; c < C; ++c) {
            const S w0 = k(0, c), w1 = k(1, c), w2 = k(2, c);
            for (Eigen::Index f = 0; f < F; ++f) {
              S acc = w1 * g(f, c);
              if (f + d < F) acc += w0 * g(f + d, c);
              if (f - d >= 0) acc += w2 * g(f - d, c);
              gx(f, c) += acc;
            }
          }
        }
        if (wants(n.b)) {
          Mat<S>& gw = touch(n.b);
          for (Eigen::Index c = 0; c < C; ++c) {
            S a0 = S(0), a1 = S(0), a2 = S(0);
            for (Eigen::Index f = 0; f < F; ++f) {
              const S gf = g(f, c);
              if (f - d >= 0) a0 += gf * in(f - d, c);
              a1 += gf * in(f, c);
              if (f + d < F) a2 += gf * in(f + d, c);
            }
            gw(0, c) += a0;
            gw(1, c) += a1;
            gw(2, c) += a2;
          }
        }
        break;
      }
      case kDown5: {
        const Mat<S>& in = node(n.a).val;
        const Mat<S>& k = node(n.b).val;
        const Eigen::Index F = in.rows(), C = in.cols(), G = n.val.rows();
        if (wants(n.a)) {
          Mat<S>& gx = touch(n.a);
          for (Eigen::Index c = 0; c < C; ++c)
            for (Eigen::Index q = 0; q < G; ++q) {
              const S gq = g(q, c);
              const Eigen::Index base = 2 * q - 2;
              for (Eigen::Index j = 0; j < 5; ++j) {
                const Eigen::Index t = base + j;
                if (t >= 0 && t < F) gx(t, c) += k(j, c) * gq;
              }
            }
        }
        if (wants(n.b)) {
          Mat<S>& gw = touch(n.b);
          for (Eigen::Index c = 0; c < C; ++c)
            for (Eigen::Index q = 0; q < G; ++q) {
              const S gq = g(q, c);
              const Eigen::Index base = 2 * q - 2;
              for (Eigen::Index j = 0; j < 5; ++j) {
                const Eigen::Index t = base + j;
                if (t >= 0 && t < F) gw(j, c) += gq * in(t, c);
              }
            }
        }
        break;
      }
      case kUp2: {
        if (wants(n.a)) {
          Mat<S>& gx = touch(n.a);
          for (Eigen::Index f = 0; f < n.val.rows(); ++f) gx.row(f / 2) += g.row(f);
        }
        break;
      }
      case kConcatCols: {
        const Eigen::Index ca = node(n.a).val.cols();
        if (wants(n.a)) touch(n.a) += g.leftCols(ca);
        if (wants(n.b)) touch(n.b) += g.rightCols(g.cols() - ca);
        break;
      }
      case kSliceCols: {
        if (wants(n.a)) touch(n.a).middleCols(n.i0, n.i1) += g;
        break;
      }
      case kSliceRows: {
        if (wants(n.a)) touch(n.a).middleRows(n.i0, n.i1) += g;
        break;
      }
      case kPadRows: {
        if (wants(n.a)) touch(n.a) += g.topRows(node(n.a).val.rows());
        break;
      }
      case kTileRows: {
        if (wants(n.a)) touch(n.a) += g.colwise().sum();
        break;
      }
      case kOverlapAdd: {
        const Eigen::Index F = node(n.a).val.rows();
        const Eigen::Index L = node(n.b).val.cols();
        const Eigen::Index stride = n.i0;
        Mat<S> gframes(F, L);
        for (Eigen::Index f = 0; f < F; ++f)
          gframes.row(f) = g.col(0).segment(f * stride, L).transpose();
        if (wants(n.a)) touch(n.a).noalias() += gframes * node(n.b).val.transpose();
        if (wants(n.b)) touch(n.b).noalias() += node(n.a).val.transpose() * gframes;
        if (wants(n.c)) touch(n.c)(0, 0) += g.sum();
        break;
      }
      case kSum: {
        if (wants(n.a)) touch(n.a).array() += g(0, 0);
        break;
      }
      case kDot: {
        if (wants(n.a)) touch(n.a) += node(n.b).val * g(0, 0);
        if (wants(n.b)) touch(n.b) += node(n.a).val * g(0, 0);
        break;
      }
      case kColMean: {
        if (wants(n.a)) {
          const S inv = S(1) / static_cast<S>(node(n.a).val.rows());
          touch(n.a) += (g * inv).colwise().replicate(node(n.a).val.rows());
        }
        break;
      }
      case kScaleByScalar: {
        const S s = node(n.b).val(0, 0);
        if (wants(n.a)) touch(n.a) += g * s;
        if (wants(n.b)) touch(n.b)(0, 0) += g.cwiseProduct(node(n.a).val).sum();
        break;
      }
      case kSiSnrDb: {
        const S db = n.val(0, 0);
        if (db > S(-60) && db < S(60)) {
          const S k = S(10) / std::log(S(10));
          const S stv = node(n.a).val(0, 0);
          const S env = node(n.b).val(0, 0) + n.s0;
          if (wants(n.a)) touch(n.a)(0, 0) += g(0, 0) * k / stv;
          if (wants(n.b)) touch(n.b)(0, 0) -= g(0, 0) * k / env;
        }
        break;
      }
      case kSoftmaxCE: {
        if (wants(n.a)) {
          Mat<S>& gz = touch(n.a);
          gz += n.aux * g(0, 0);
          gz(0, n.i0) -= g(0, 0);
        }
        break;
      }
    }
  }
};

}  // namespace mcx::ad

#endif  // MCX_AUTODIFF_HPP
