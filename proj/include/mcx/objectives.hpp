// include/mcx/objectives.hpp
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

#ifndef MCX_OBJECTIVES_HPP
#define MCX_OBJECTIVES_HPP

#include <Eigen/Dense>
#include <vector>

#include "mcx/autodiff.hpp"

namespace mcx {

constexpr double kSiSnrEps = 1e-10;
constexpr double kSiSnrClampDb = 60.0;
constexpr int kMaxPitSpeakers = 6;  // brute-force permutation bound

// Scale-invariant SNR in dB: the estimate is projected onto the reference;
// 10*log10(||s_target||^2 / (||e_noise||^2 + eps)), clamped to +-60 dB.
// A zero projection (orthogonal estimate) yields exactly -60. Errors on
// length mismatch, empty signals, or a zero reference.
double si_snr(const Eigen::VectorXd& est, const Eigen::VectorXd& ref);

// si_snr(est, ref) - si_snr(mixture_channel, ref).
double si_snr_improvement(const Eigen::VectorXd& est, const Eigen::VectorXd& ref,
                          const Eigen::VectorXd& mixture_channel);

// Negative mean over slots of si_snr(est[k], ref[k]).
double fixed_order_loss(const std::vector<Eigen::VectorXd>& ests,
                        const std::vector<Eigen::VectorXd>& refs);

struct PitResult {
  std::vector<int> mapping;  // mapping[est_slot] = reference index
  double mean_si_snr = 0.0;  // mean si_snr under the best assignment
};

// Best permutation by brute force (K <= kMaxPitSpeakers). Ties resolve to the
// lexicographically smallest mapping.
PitResult pit_assign(const std::vector<Eigen::VectorXd>& ests,
                     const std::vector<Eigen::VectorXd>& refs);

// -pit_assign(...).mean_si_snr, with the same arithmetic path as
// fixed_order_loss under the corresponding slot permutation.
double pit_loss(const std::vector<Eigen::VectorXd>& ests,
                const std::vector<Eigen::VectorXd>& refs);

// ---- differentiable versions (tape graph builders) -------------------------

template <typename S>
ad::Var si_snr_var(ad::Tape<S>& tape, ad::Var est, const ad::Mat<S>& ref);

// Loss vars are negative mean si_snr over slots; refs are constants.
template <typename S>
ad::Var fixed_order_loss_var(ad::Tape<S>& tape, const std::vector<ad::Var>& ests,
                             const std::vector<ad::Mat<S>>& refs);

// The permutation is selected on values; gradient flows through the chosen
// pairs only.
template <typename S>
ad::Var pit_loss_var(ad::Tape<S>& tape, const std::vector<ad::Var>& ests,
                     const std::vector<ad::Mat<S>>& refs);

}  // namespace mcx

#endif  // MCX_OBJECTIVES_HPP
