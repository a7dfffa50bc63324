// src/objectives.cpp
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

#include "mcx/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mcx {
namespace {

void check_pair(const Eigen::VectorXd& est, const Eigen::VectorXd& ref) {
  if (est.size() == 0 || ref.size() == 0)
    throw std::invalid_argument("si_snr: empty signal");
  if (est.size() != ref.size())
    throw std::invalid_argument("si_snr: length mismatch (" + std::to_string(est.size()) +
                                " vs " + std::to_string(ref.size()) + ")");
  if (ref.squaredNorm() <= 0.0) throw std::invalid_argument("si_snr: zero reference");
}

void check_sets(const std::vector<Eigen::VectorXd>& ests,
                const std::vector<Eigen::VectorXd>& refs, const char* who) {
  if (ests.empty() || ests.size() != refs.size())
    throw std::invalid_argument(std::string(who) + ": slot count mismatch");
  for (std::size_t k = 0; k < ests.size(); ++k) check_pair(ests[k], refs[k]);
}

double clamp_db(double db) {
  if (db < -kSiSnrClampDb) return -kSiSnrClampDb;
  if (db > kSiSnrClampDb) return kSiSnrClampDb;
  return db;
}

// All permutations of [0..k), lexicographic order.
std::vector<std::vector<int>> all_mappings(int k) {
  std::vector<int> m(static_cast<std::size_t>(k));
  std::iota(m.begin(), m.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(m);
  } while (std::next_permutation(m.begin(), m.end()));
  return out;
}

// Mean si_snr for mapping[est_slot] = ref index, summed in reference order so
// that every candidate reuses the exact arithmetic path of fixed_order_loss.
double mapping_mean(const std::vector<std::vector<double>>& pairwise,
                    const std::vector<int>& mapping) {
  const int k = static_cast<int>(mapping.size());
  std::vector<int> est_of_ref(static_cast<std::size_t>(k));
  for (int e = 0; e < k; ++e) est_of_ref[static_cast<std::size_t>(mapping[e])] = e;
  double acc = 0.0;
  for (int j = 0; j < k; ++j)
    acc += pairwise[static_cast<std::size_t>(est_of_ref[static_cast<std::size_t>(j)])]
                   [static_cast<std::size_t>(j)];
  return acc / static_cast<double>(k);
}

}  // namespace

double si_snr(const Eigen::VectorXd& est, const Eigen::VectorXd& ref) {
  check_pair(est, ref);
  const double ref_energy = ref.squaredNorm();
  const double alpha = est.dot(ref) / ref_energy;
  const double target_energy = alpha * alpha * ref_energy;
  const double noise_energy = (est - alpha * ref).squaredNorm();
  if (target_energy <= 0.0) return -kSiSnrClampDb;
  return clamp_db(10.0 * std::log10(target_energy / (noise_energy + kSiSnrEps)));
}

double si_snr_improvement(const Eigen::VectorXd& est, const Eigen::VectorXd& ref,
                          const Eigen::VectorXd& mixture_channel) {
  return si_snr(est, ref) - si_snr(mixture_channel, ref);
}

double fixed_order_loss(const std::vector<Eigen::VectorXd>& ests,
                        const std::vector<Eigen::VectorXd>& refs) {
  check_sets(ests, refs, "fixed_order_loss");
  double acc = 0.0;
  for (std::size_t k = 0; k < ests.size(); ++k) acc += si_snr(ests[k], refs[k]);
  return -acc / static_cast<double>(ests.size());
}

PitResult pit_assign(const std::vector<Eigen::VectorXd>& ests,
                     const std::vector<Eigen::VectorXd>& refs) {
  check_sets(ests, refs, "pit_assign");
  const int k = static_cast<int>(ests.size());
  if (k > kMaxPitSpeakers)
    throw std::invalid_argument("pit_assign: more than " +
                                std::to_string(kMaxPitSpeakers) + " slots");

  std::vector<std::vector<double>> pairwise(static_cast<std::size_t>(k));
  for (int e = 0; e < k; ++e) {
    pairwise[static_cast<std::size_t>(e)].resize(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j)
      pairwise[static_cast<std::size_t>(e)][static_cast<std::size_t>(j)] =
          si_snr(ests[static_cast<std::size_t>(e)], refs[static_cast<std::size_t>(j)]);
  }

  PitResult best;
  bool first = true;
  for (const auto& mapping : all_mappings(k)) {
    const double mean = mapping_mean(pairwise, mapping);
    if (first || mean > best.mean_si_snr) {
      best.mapping = mapping;
      best.mean_si_snr = mean;
      first = false;
    }
  }
  return best;
}

double pit_loss(const std::vector<Eigen::VectorXd>& ests,
                const std::vector<Eigen::VectorXd>& refs) {
  return -pit_assign(ests, refs).mean_si_snr;
}

// ---- tape builders ----------------------------------------------------------

template <typename S>
ad::Var si_snr_var(ad::Tape<S>& tape, ad::Var est, const ad::Mat<S>& ref) {
  if (ref.size() == 0 || tape.value(est).size() == 0)
    throw std::invalid_argument("si_snr: empty signal");
  if (tape.value(est).rows() != ref.rows() || tape.value(est).cols() != ref.cols())
    throw std::invalid_argument("si_snr: length mismatch");
  const S ref_energy = ref.squaredNorm();
  if (!(ref_energy > S(0))) throw std::invalid_argument("si_snr: zero reference");

  ad::Var refc = tape.constant(ref);
  ad::Var alpha = tape.scale(tape.dot(est, refc), S(1) / ref_energy);
  ad::Var target_energy = tape.scale(tape.cmul(alpha, alpha), ref_energy);
  ad::Var noise = tape.sub(est, tape.scale_by_scalar(refc, alpha));
  ad::Var noise_energy = tape.dot(noise, noise);
  return tape.si_snr_db(target_energy, noise_energy, static_cast<S>(kSiSnrEps));
}

namespace {

template <typename S>
void check_sets_var(ad::Tape<S>& tape, const std::vector<ad::Var>& ests,
                    const std::vector<ad::Mat<S>>& refs, const char* who) {
  if (ests.empty() || ests.size() != refs.size())
    throw std::invalid_argument(std::string(who) + ": slot count mismatch");
  for (std::size_t k = 0; k < ests.size(); ++k)
    if (tape.value(ests[k]).rows() != refs[k].rows())
      throw std::invalid_argument(std::string(who) + ": length mismatch");
}

template <typename S>
ad::Var negative_mean(ad::Tape<S>& tape, const std::vector<ad::Var>& terms) {
  ad::Var acc = terms[0];
  for (std::size_t k = 1; k < terms.size(); ++k) acc = tape.add(acc, terms[k]);
  return tape.scale(acc, S(-1) / static_cast<S>(terms.size()));
}

}  // namespace

template <typename S>
ad::Var fixed_order_loss_var(ad::Tape<S>& tape, const std::vector<ad::Var>& ests,
                             const std::vector<ad::Mat<S>>& refs) {
  check_sets_var(tape, ests, refs, "fixed_order_loss");
  std::vector<ad::Var> terms;
  terms.reserve(ests.size());
  for (std::size_t k = 0; k < ests.size(); ++k)
    terms.push_back(si_snr_var(tape, ests[k], refs[k]));
  return negative_mean(tape, terms);
}

template <typename S>
ad::Var pit_loss_var(ad::Tape<S>& tape, const std::vector<ad::Var>& ests,
                     const std::vector<ad::Mat<S>>& refs) {
  check_sets_var(tape, ests, refs, "pit_loss");
  const int k = static_cast<int>(ests.size());
  if (k > kMaxPitSpeakers)
    throw std::invalid_argument("pit_loss: more than " +
                                std::to_string(kMaxPitSpeakers) + " slots");

  std::vector<std::vector<ad::Var>> pairwise(static_cast<std::size_t>(k));
  for (int e = 0; e < k; ++e) {
    for (int j = 0; j < k; ++j)
      pairwise[static_cast<std::size_t>(e)].push_back(
          si_snr_var(tape, ests[static_cast<std::size_t>(e)], refs[static_cast<std::size_t>(j)]));
  }

  std::vector<int> m(static_cast<std::size_t>(k));
  std::iota(m.begin(), m.end(), 0);
  std::vector<int> best_mapping;
  S best_mean = S(0);
  bool first = true;
  do {
    std::vector<int> est_of_ref(static_cast<std::size_t>(k));
    for (int e = 0; e < k; ++e) est_of_ref[static_cast<std::size_t>(m[static_cast<std::size_t>(e)])] = e;
    S acc = S(0);
    for (int j = 0; j < k; ++j)
      acc += tape.value(pairwise[static_cast<std::size_t>(est_of_ref[static_cast<std::size_t>(j)])]
                                [static_cast<std::size_t>(j)])(0, 0);
    const S mean = acc / static_cast<S>(k);
    if (first || mean > best_mean) {
      best_mapping = m;
      best_mean = mean;
      first = false;
    }
  } while (std::next_permutation(m.begin(), m.end()));

  std::vector<int> est_of_ref(static_cast<std::size_t>(k));
  for (int e = 0; e < k; ++e)
    est_of_ref[static_cast<std::size_t>(best_mapping[static_cast<std::size_t>(e)])] = e;
  std::vector<ad::Var> terms;
  terms.reserve(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j)
    terms.push_back(pairwise[static_cast<std::size_t>(est_of_ref[static_cast<std::size_t>(j)])]
                            [static_cast<std::size_t>(j)]);
  return negative_mean(tape, terms);
}

template ad::Var si_snr_var<float>(ad::Tape<float>&, ad::Var, const ad::Mat<float>&);
template ad::Var si_snr_var<double>(ad::Tape<double>&, ad::Var, const ad::Mat<double>&);
template ad::Var fixed_order_loss_var<float>(ad::Tape<float>&, const std::vector<ad::Var>&,
                                             const std::vector<ad::Mat<float>>&);
template ad::Var fixed_order_loss_var<double>(ad::Tape<double>&, const std::vector<ad::Var>&,
                                              const std::vector<ad::Mat<double>>&);
template ad::Var pit_loss_var<float>(ad::Tape<float>&, const std::vector<ad::Var>&,
                                     const std::vector<ad::Mat<float>>&);
template ad::Var pit_loss_var<double>(ad::Tape<double>&, const std::vector<ad::Var>&,
                                      const std::vector<ad::Mat<double>>&);

}  // namespace mcx
