// gridsep/objectives/losses.hpp

// Copyright 2026 The gridsep Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Training objectives (scale-the-estimate SI-SDR, mixture constraint, PIT)
// and scale-the-target SI-SDR evaluation metrics.

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridsep/adcore/ops.hpp"

namespace gridsep::objectives {

using ad::Tensor;

inline constexpr double kLossEps = 1e-8;
/// Metric ceiling: the metric denominator is guarded by 1e-8 * numerator.
inline constexpr double kMetricCapDb = 80.0;

enum class Objective { kSiSdr, kMixtureConstraint };

inline std::string to_string(Objective o) { return o == Objective::kSiSdr ? "si_sdr" : "mc"; }

/// Accepts the canonical names and the aliases eq1 (si_sdr) and eq2 (mc).
inline Objective parse_objective(const std::string& s) {
  if (s == "si_sdr" || s == "eq1") return Objective::kSiSdr;
  if (s == "mc" || s == "eq2") return Objective::kMixtureConstraint;
  throw std::invalid_argument("unknown objective '" + s + "' (si_sdr | mc)");
}

namespace detail {

template <class S>
void check_pair(const Tensor<S>& est, const Tensor<S>& ref, const char* who) {
  if (est.rank() != 1 || ref.rank() != 1 || est.numel() != ref.numel())
    throw std::invalid_argument(std::string(who) + ": estimate " + ad::to_string(est.shape()) +
                                " and reference " + ad::to_string(ref.shape()) +
                                " must be 1-D of equal length");
}

template <class S>
void check_lists(const std::vector<Tensor<S>>& ests, const std::vector<Tensor<S>>& refs,
                 const char* who) {
  if (ests.empty() || ests.size() != refs.size())
    throw std::invalid_argument(std::string(who) + ": got " + std::to_string(ests.size()) +
                                " estimates for " + std::to_string(refs.size()) + " references");
}

template <class S>
double energy(std::span<const S> x) {
  double e = 0;
  for (S v : x) e += static_cast<double>(v) * static_cast<double>(v);
  return e;
}

}  // namespace detail

/// (est . ref) / (est . est + eps) on plain values.
template <class S>
double scale_factor(std::span<const S> est, std::span<const S> ref) {
  if (est.size() != ref.size()) throw std::invalid_argument("scale_factor: length mismatch");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    num += static_cast<double>(est[i]) * static_cast<double>(ref[i]);
    den += static_cast<double>(est[i]) * static_cast<double>(est[i]);
  }
  return num / (den + kLossEps);
}

/// Differentiable optimal scale of `est` toward `ref`, a [1] tensor.
template <class S>
Tensor<S> scale_factor(const Tensor<S>& est, const Tensor<S>& ref) {
  detail::check_pair(est, ref, "scale_factor");
  return ad::div(ad::dot(est, ref), ad::add_scalar(ad::dot(est, est), S(kLossEps)));
}

/// Per-source SI-SDR term: -10 log10(|s|^2 / (|a s_hat - s|^2 + eps) + eps).
/// Also returns the scaled estimate a * s_hat through `scaled`.
template <class S>
Tensor<S> si_sdr_term(const Tensor<S>& est, const Tensor<S>& ref, Tensor<S>* scaled = nullptr,
                      Tensor<S>* alpha = nullptr) {
  detail::check_pair(est, ref, "si_sdr_se_loss");
  const double ref_energy = detail::energy(ref.data());
  if (!(ref_energy > 0)) throw std::invalid_argument("si_sdr_se_loss: zero-energy reference");
  auto a = scale_factor(est, ref);
  auto se = ad::mul_scalar(est, a);
  auto err = ad::add_scalar(ad::sum_squares(ad::sub(se, ref)), S(kLossEps));
  auto ratio = ad::add_scalar(ad::div(ad::sum_squares(ref), err), S(kLossEps));
  if (scaled) *scaled = se;
  if (alpha) *alpha = a;
  return ad::scale(ad::log10(ratio), S(-10));
}

/// Sum of per-source SI-SDR terms for a fixed assignment ests[c] <-> refs[c].
template <class S>
Tensor<S> si_sdr_se_loss(const std::vector<Tensor<S>>& ests, const std::vector<Tensor<S>>& refs) {
  detail::check_lists(ests, refs, "si_sdr_se_loss");
  std::vector<Tensor<S>> terms;
  for (std::size_t c = 0; c < ests.size(); ++c) terms.push_back(si_sdr_term(ests[c], refs[c]));
  return ad::add_n(terms);
}

/// Loss value split into its two parts.
template <class S>
struct LossParts {
  Tensor<S> total;
  Tensor<S> mc_term;  // empty tensor for the plain SI-SDR objective
  std::vector<Tensor<S>> alphas;
};

template <class S>
LossParts<S> loss_parts(const std::vector<Tensor<S>>& ests, const std::vector<Tensor<S>>& refs,
                        const Tensor<S>* mixture, Objective objective) {
  detail::check_lists(ests, refs, "loss");
  LossParts<S> out;
  std::vector<Tensor<S>> terms, scaled;
  for (std::size_t c = 0; c < ests.size(); ++c) {
    Tensor<S> se, a;
    terms.push_back(si_sdr_term(ests[c], refs[c], &se, &a));
    scaled.push_back(se);
    out.alphas.push_back(a);
  }
  out.total = ad::add_n(terms);
  if (objective == Objective::kMixtureConstraint) {
    if (!mixture || mixture->rank() != 1 || mixture->numel() != ests[0].numel())
      throw std::invalid_argument("mc_loss: mixture length must match the estimates");
    const auto n = static_cast<S>(mixture->numel());
    out.mc_term = ad::scale(ad::sum(ad::abs(ad::sub(ad::add_n(scaled), *mixture))), S(1) / n);
    out.total = ad::add(out.total, out.mc_term);
  }
  return out;
}

/// SI-SDR loss plus (1/N) |sum_c a_c s_hat_c - x|_1, unweighted.
template <class S>
Tensor<S> mc_loss(const std::vector<Tensor<S>>& ests, const std::vector<Tensor<S>>& refs,
                  const Tensor<S>& mixture) {
  return loss_parts(ests, refs, &mixture, Objective::kMixtureConstraint).total;
}

template <class S>
struct PitResult {
  Tensor<S> loss;
  Tensor<S> mc_term;                     // empty for the SI-SDR objective
  std::vector<std::size_t> permutation;  // estimate index -> reference index (0-based)
  std::vector<double> alphas;            // scale of estimate c toward its reference
};

/// Utterance-level PIT: evaluates every assignment, keeps the smallest loss,
/// ties going to the lexicographically first permutation. Only the chosen
/// assignment is recorded for backpropagation.
template <class S>
PitResult<S> pit(const std::vector<Tensor<S>>& ests, const std::vector<Tensor<S>>& refs,
                 const Tensor<S>* mixture, Objective objective) {
  detail::check_lists(ests, refs, "pit");
  const std::size_t c = ests.size();
  if (c > 4) throw std::invalid_argument("pit: at most 4 sources supported");
  std::vector<std::size_t> perm(c);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::vector<std::size_t> best = perm;
  double best_loss = 0;
  bool first = true;
  {
    ad::NoGradScope no_grad;
    std::vector<Tensor<S>> detached;
    for (const auto& e : ests) detached.push_back(e.detach());
    do {
      std::vector<Tensor<S>> assigned;
      for (std::size_t i = 0; i < c; ++i) assigned.push_back(refs[perm[i]]);
      const double v = loss_parts(detached, assigned, mixture, objective).total.item();
      if (first || v < best_loss) {
        best_loss = v;
        best = perm;
        first = false;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  std::vector<Tensor<S>> assigned;
  for (std::size_t i = 0; i < c; ++i) assigned.push_back(refs[best[i]]);
  auto parts = loss_parts(ests, assigned, mixture, objective);
  PitResult<S> r{parts.total, parts.mc_term, best, {}};
  for (const auto& a : parts.alphas) r.alphas.push_back(static_cast<double>(a.item()));
  return r;
}

// ---------------------------------------------------------------------------
// Evaluation metrics (plain values, double precision)

/// 10 log10(|b s|^2 / |s_hat - b s|^2) with b = (s_hat . s) / (s . s),
/// capped at 80 dB.
template <class S>
double si_sdr_metric(std::span<const S> est, std::span<const S> ref) {
  if (est.size() != ref.size() || est.empty())
    throw std::invalid_argument("si_sdr_metric: signals must be non-empty and equal length");
  double dot = 0, ref_e = 0, est_e = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    dot += static_cast<double>(est[i]) * static_cast<double>(ref[i]);
    ref_e += static_cast<double>(ref[i]) * static_cast<double>(ref[i]);
    est_e += static_cast<double>(est[i]) * static_cast<double>(est[i]);
  }
  if (!(ref_e > 0) || !(est_e > 0))
    throw std::invalid_argument("si_sdr_metric: zero-energy signal");
  const double beta = dot / ref_e;
  double num = 0, den = 0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double t = beta * static_cast<double>(ref[i]);
    const double e = static_cast<double>(est[i]) - t;
    num += t * t;
    den += e * e;
  }
  const double cap = std::pow(10.0, -kMetricCapDb / 10.0);
  return 10.0 * std::log10(num / (den + cap * num) + 1e-300);
}

inline double si_sdr_metric(const std::vector<double>& est, const std::vector<double>& ref) {
  return si_sdr_metric(std::span<const double>(est), std::span<const double>(ref));
}

struct SiSdriResult {
  double improvement_db = 0;  // mean over sources
  double mixture_db = 0;      // mean SI-SDR of the mixture against each reference
  double estimate_db = 0;     // mean SI-SDR of the assigned estimates
  std::vector<std::size_t> permutation;
};

/// Mean SI-SDR improvement under the metric-optimal assignment.
inline SiSdriResult si_sdri(const std::vector<std::vector<double>>& ests,
                            const std::vector<std::vector<double>>& refs,
                            const std::vector<double>& mixture) {
  if (ests.empty() || ests.size() != refs.size())
    throw std::invalid_argument("si_sdri: estimate and reference counts differ");
  const std::size_t c = ests.size();
  if (c > 4) throw std::invalid_argument("si_sdri: at most 4 sources supported");
  std::vector<std::vector<double>> pair(c, std::vector<double>(c));
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) pair[i][j] = si_sdr_metric(ests[i], refs[j]);
  std::vector<std::size_t> perm(c);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  SiSdriResult r;
  double best = 0;
  bool first = true;
  do {
    double s = 0;
    for (std::size_t i = 0; i < c; ++i) s += pair[i][perm[i]];
    if (first || s > best) {
      best = s;
      r.permutation = perm;
      first = false;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  double est = 0, mix = 0, gain = 0;
  for (std::size_t i = 0; i < c; ++i) {
    const double m = si_sdr_metric(mixture, refs[r.permutation[i]]);
    est += pair[i][r.permutation[i]];
    mix += m;
    gain += pair[i][r.permutation[i]] - m;
  }
  r.estimate_db = est / static_cast<double>(c);
  r.mixture_db = mix / static_cast<double>(c);
  r.improvement_db = gain / static_cast<double>(c);
  return r;
}

}  // namespace gridsep::objectives
