// Copyright 2026 The qstable Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Estimators of the stable scale Lambda from quantized bin counts, their
// bias corrections, and full-information baselines.

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "qstable/alpha.hpp"
#include "qstable/analysis.hpp"
#include "qstable/coding.hpp"
#include "qstable/error.hpp"
#include "qstable/power_stable.hpp"

namespace qstable {

struct EstimatorOptions {
  /// Move 1e-6 of mass into an empty boundary bin so that all-in-one-bin
  /// samples still give a finite estimate. When false such samples raise
  /// estimation_error.
  bool smoothing = true;
  double smoothing_amount = 1e-6;
  /// Relative accuracy of the multibit root search.
  double relative_tolerance = 1e-10;
  /// Fill EstimateReport::asymptotic_variance_coefficient (costs a few
  /// distribution evaluations; simulation loops may skip it).
  bool compute_variance = true;
};

struct EstimateReport {
  double estimate = 0.0;
  double corrected = 0.0;
  double asymptotic_variance_coefficient = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> eta_hat;
  std::uint64_t n = 0;
  bool smoothing_applied = false;
  /// False when `corrected` merely repeats `estimate` (no correction known
  /// for this scheme, or the correction was numerically unusable).
  bool correction_applied = false;
};

struct BiasCorrectionTerms {
  double B = 0.0;
  double D = 0.0;
};

/// Counts as reals, after the boundary smoothing rule.
struct SmoothedCounts {
  std::vector<double> counts;
  double total = 0.0;
  bool smoothing_applied = false;
};

/// Empty first or last bins receive `amount`, taken from the fullest bin (the
/// first one on ties), so the total is unchanged. For one threshold this is
/// n_1 = 0 -> 1e-6 and n_1 = n -> n - 1e-6.
inline SmoothedCounts smooth_counts(const BinCounts& counts, const EstimatorOptions& opt) {
  if (counts.bins() < 2) throw usage_error("bin counts need at least two bins");
  SmoothedCounts out;
  out.counts.assign(counts.counts.begin(), counts.counts.end());
  out.total = static_cast<double>(counts.total());
  if (counts.total() == 0) throw usage_error("estimators need at least one sample");
  const std::size_t last = counts.bins() - 1;
  const bool first_empty = counts.counts.front() == 0;
  const bool last_empty = counts.counts.back() == 0;
  if (!(first_empty || last_empty)) return out;
  if (!opt.smoothing) {
    if (counts.counts.front() == counts.total()) {
      throw estimation_error("all samples fall in the lowest bin", boundary_direction::toward_zero);
    }
    if (counts.counts.back() == counts.total()) {
      throw estimation_error("all samples fall in the highest bin", boundary_direction::toward_infinity);
    }
    return out;
  }
  const std::size_t fullest = static_cast<std::size_t>(
      std::max_element(counts.counts.begin(), counts.counts.end()) - counts.counts.begin());
  for (std::size_t k : {std::size_t{0}, last}) {
    if (counts.counts[k] == 0) {
      out.counts[k] += opt.smoothing_amount;
      out.counts[fullest] -= opt.smoothing_amount;
    }
  }
  out.smoothing_applied = true;
  return out;
}

namespace detail {

inline double one_bit_correction_factor(double coefficient, double n) {
  const double denom = 1.0 + coefficient / n;
  return std::isfinite(denom) && denom > 0.0 ? denom : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace detail

/// 1-bit MLE Lambda_hat = C / F^{-1}(n_1/n), with the bias-corrected value
/// Lambda_hat / (1 + b(n_1/n)/n).
inline EstimateReport mle_1bit(const BinCounts& counts, double C, const PowerStableDist& dist,
                               const EstimatorOptions& opt = {}) {
  if (counts.bins() != 2) throw usage_error("mle_1bit needs counts from exactly one threshold");
  if (!(C > 0.0) || !std::isfinite(C)) throw domain_error("mle_1bit: threshold must be positive");
  const SmoothedCounts s = smooth_counts(counts, opt);
  const double p = s.counts[0] / s.total;
  const double z = dist.inverse_cdf(p);
  EstimateReport r;
  r.n = counts.total();
  r.smoothing_applied = s.smoothing_applied;
  r.estimate = C / z;
  r.eta_hat = {1.0 / z};
  const double denom = detail::one_bit_correction_factor(bias_coefficient_from_frequency(dist, p), s.total);
  r.correction_applied = !std::isnan(denom);
  r.corrected = r.correction_applied ? r.estimate / denom : r.estimate;
  if (opt.compute_variance) r.asymptotic_variance_coefficient = variance_coefficient(dist, r.eta_hat);
  return r;
}

inline EstimateReport mle_1bit(const BinCounts& counts, double C, Alpha alpha, const EstimatorOptions& opt = {},
                               PowerStableOptions dist_options = {}) {
  return mle_1bit(counts, C, PowerStableDist{alpha, dist_options}, opt);
}

/// Bias-corrected 1-bit estimate; closed forms at the anchor alphas.
inline double bias_corrected_1bit(const BinCounts& counts, double C, const PowerStableDist& dist,
                                  const EstimatorOptions& opt = {}) {
  EstimatorOptions o = opt;
  o.compute_variance = false;
  const EstimateReport r = mle_1bit(counts, C, dist, o);
  if (!r.correction_applied) throw estimation_error("bias correction is not finite for these counts");
  return r.corrected;
}

inline double bias_corrected_1bit(const BinCounts& counts, double C, Alpha alpha, const EstimatorOptions& opt = {},
                                  PowerStableOptions dist_options = {}) {
  return bias_corrected_1bit(counts, C, PowerStableDist{alpha, dist_options}, opt);
}

namespace detail {

inline constexpr double kMinBinProbability = 1e-12;

/// B = sum (psi_k - psi_{k-1})^2 / p_k and D = sum (psi_k - psi_{k-1})
/// (chi_k - chi_{k-1}) / p_k with psi = -z f(z), chi = z^2 f'(z), zero at
/// both ends of the range.
inline BiasCorrectionTerms bias_terms(std::span<const ThresholdTerms> t) {
  const auto p = bin_probabilities(t);
  BiasCorrectionTerms out;
  double psi_prev = 0.0, chi_prev = 0.0;
  for (std::size_t k = 0; k <= t.size(); ++k) {
    if (!(p[k] >= kMinBinProbability)) throw estimation_error("bias correction: bin probability below 1e-12");
    const double psi = k < t.size() ? -t[k].z * t[k].pdf : 0.0;
    const double chi = k < t.size() ? t[k].z * t[k].z * t[k].pdf_prime : 0.0;
    out.B += (psi - psi_prev) * (psi - psi_prev) / p[k];
    out.D += (psi - psi_prev) * (chi - chi_prev) / p[k];
    psi_prev = psi;
    chi_prev = chi;
  }
  return out;
}

inline std::vector<double> normalized(std::span<const double> thresholds, double lambda) {
  std::vector<double> z;
  z.reserve(thresholds.size());
  for (double c : thresholds) z.push_back(c / lambda);
  return z;
}

}  // namespace detail

/// B and D of the 2-bit (three-threshold) bias expansion
/// E(Lambda_hat) = Lambda (1 + 1/(nB) - D/(2nB^2)), at the plug-in lambda_hat.
inline BiasCorrectionTerms bias_correction_terms(const ThresholdScheme& scheme, double lambda_hat,
                                                 const PowerStableDist& dist) {
  if (scheme.m() != 3) throw usage_error("bias_correction_terms is defined for three thresholds");
  if (!(lambda_hat > 0.0) || !std::isfinite(lambda_hat)) throw domain_error("lambda_hat must be positive");
  const auto z = detail::normalized(scheme.thresholds(), lambda_hat);
  return detail::bias_terms(threshold_terms(dist, z, true));
}

inline BiasCorrectionTerms bias_correction_terms(const ThresholdScheme& scheme, double lambda_hat,
                                                 PowerStableOptions dist_options = {}) {
  return bias_correction_terms(scheme, lambda_hat, PowerStableDist{scheme.alpha(), dist_options});
}

namespace detail {

/// Score of the multinomial log-likelihood in t = log Lambda:
/// dl/dt = -sum_k w_k (phi_k - phi_{k-1}) / p_k with phi = z f(z). Bins with
/// vanishing probability but positive weight dominate; their sign says which
/// way Lambda must move.
class MultibitScore {
 public:
  MultibitScore(const PowerStableDist& dist, std::span<const double> thresholds, std::span<const double> weights)
      : dist_(dist), thresholds_(thresholds), weights_(weights) {}

  double operator()(double t) const {
    const double lambda = std::exp(t);
    const auto terms = threshold_terms(dist_, normalized(thresholds_, lambda));
    const auto p = bin_probabilities(terms);
    constexpr double kHuge = 1e300;
    double s = 0.0, phi_prev = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double phi = k < terms.size() ? terms[k].z * terms[k].pdf : 0.0;
      if (weights_[k] > 0.0) {
        if (!(p[k] > 0.0)) {
          // Mass of bin k has escaped: to the upper bins if its upper edge
          // sits far below the bulk (Lambda too large), else to the lower.
          const bool lambda_too_large = k < terms.size() && terms[k].cdf < 0.5;
          return lambda_too_large ? -kHuge : kHuge;
        }
        s -= weights_[k] * (phi - phi_prev) / p[k];
      }
      phi_prev = phi;
    }
    return s;
  }

 private:
  const PowerStableDist& dist_;
  std::span<const double> thresholds_;
  std::span<const double> weights_;
};

}  // namespace detail

/// Multibit MLE: maximizer of sum_k n_k log p_k(Lambda), found by a bracketed
/// root search of the score in log Lambda. The bracket starts at
/// [seed/100, 100 seed], seed being the 1-bit estimate at the middle
/// threshold, and widens until the score changes sign.
inline EstimateReport mle_multibit(const BinCounts& counts, const ThresholdScheme& scheme,
                                   const PowerStableDist& dist, const EstimatorOptions& opt = {}) {
  const std::size_t m = scheme.m();
  if (m < 2) throw usage_error("mle_multibit needs at least two thresholds");
  if (counts.bins() != m + 1) throw usage_error("bin counts do not match the threshold scheme");
  if (!scheme.strictly_increasing()) throw domain_error("mle_multibit: thresholds must be strictly increasing");
  const SmoothedCounts s = smooth_counts(counts, opt);
  std::vector<double> w(s.counts.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = s.counts[k] / s.total;

  // Middle-threshold 1-bit seed.
  const std::size_t mid = m / 2;
  double below = 0.0;
  for (std::size_t k = 0; k <= mid; ++k) below += w[k];
  below = std::clamp(below, 1e-9, 1.0 - 1e-9);
  const double seed = scheme[mid] / dist.inverse_cdf(below);

  const detail::MultibitScore score(dist, scheme.thresholds(), w);
  double lo = std::log(seed) - std::log(100.0), hi = std::log(seed) + std::log(100.0);
  double s_lo = score(lo), s_hi = score(hi);
  for (int i = 0; i < 8 && s_lo <= 0.0; ++i) {
    hi = lo;
    s_hi = s_lo;
    lo -= std::log(100.0);
    s_lo = score(lo);
  }
  for (int i = 0; i < 8 && s_hi >= 0.0; ++i) {
    lo = hi;
    s_lo = s_hi;
    hi += std::log(100.0);
    s_hi = score(hi);
  }
  if (s_lo <= 0.0) throw estimation_error("likelihood increases toward Lambda = 0", boundary_direction::toward_zero);
  if (s_hi >= 0.0) {
    throw estimation_error("likelihood increases toward Lambda = infinity", boundary_direction::toward_infinity);
  }
  std::uintmax_t iters = 200;
  const double tol = opt.relative_tolerance;
  auto [a, b] = boost::math::tools::toms748_solve(
      score, lo, hi, s_lo, s_hi, [tol](double x, double y) { return std::abs(y - x) <= tol; }, iters);
  const double t_hat = 0.5 * (a + b);

  EstimateReport r;
  r.n = counts.total();
  r.smoothing_applied = s.smoothing_applied;
  r.estimate = std::exp(t_hat);
  r.eta_hat.reserve(m);
  for (double c : scheme.thresholds()) r.eta_hat.push_back(r.estimate / c);
  r.corrected = r.estimate;
  if (m == 3) {
    try {
      const auto bd = bias_correction_terms(scheme, r.estimate, dist);
      const double n = s.total;
      const double denom = 1.0 + 1.0 / (n * bd.B) - bd.D / (2.0 * n * bd.B * bd.B);
      if (std::isfinite(denom) && denom > 0.0) {
        r.corrected = r.estimate / denom;
        r.correction_applied = true;
      }
    } catch (const estimation_error&) {
      // Near-empty bins at the plug-in estimate: keep the uncorrected value.
    }
  }
  if (opt.compute_variance) r.asymptotic_variance_coefficient = variance_coefficient(dist, r.eta_hat);
  return r;
}

inline EstimateReport mle_multibit(const BinCounts& counts, const ThresholdScheme& scheme,
                                   const EstimatorOptions& opt = {}, PowerStableOptions dist_options = {}) {
  return mle_multibit(counts, scheme, PowerStableDist{scheme.alpha(), dist_options}, opt);
}

/// Dispatches on the number of thresholds.
inline EstimateReport estimate(const BinCounts& counts, const ThresholdScheme& scheme, const PowerStableDist& dist,
                               const EstimatorOptions& opt = {}) {
  if (scheme.m() == 1) return mle_1bit(counts, scheme[0], dist, opt);
  return mle_multibit(counts, scheme, dist, opt);
}

// Full-information baselines.

/// Gaussian (alpha = 2) scale estimator. S(2, L) is N(0, 2L), so the mean
/// square is halved to estimate L; its variance is 2 L^2 / n.
inline double full_info_arithmetic_mean(std::span<const double> samples) {
  if (samples.empty()) throw usage_error("arithmetic mean of an empty sample");
  double s = 0.0;
  for (double y : samples) s += y * y;
  return s / (2.0 * static_cast<double>(samples.size()));
}

/// Cauchy (alpha = 1) MLE: root of sum Lambda^2 / (Lambda^2 + y_j^2) = n/2.
inline double full_info_cauchy_mle(std::span<const double> samples) {
  if (samples.size() < 2) throw usage_error("Cauchy MLE needs at least two samples");
  std::vector<double> sq;
  sq.reserve(samples.size());
  for (double y : samples) sq.push_back(y * y);
  const double half = 0.5 * static_cast<double>(samples.size());
  auto g = [&](double t) {
    const double l2 = std::exp(2.0 * t);
    double s = 0.0;
    for (double v : sq) s += l2 / (l2 + v);
    return s - half;
  };
  std::vector<double> mags(samples.size());
  std::transform(samples.begin(), samples.end(), mags.begin(), [](double y) { return std::abs(y); });
  std::nth_element(mags.begin(), mags.begin() + mags.size() / 2, mags.end());
  const double median = mags[mags.size() / 2];
  if (!(median > 0.0)) throw estimation_error("Cauchy MLE: at least half of the samples are zero");
  double lo = std::log(median) - 1.0, hi = std::log(median) + 1.0;
  double g_lo = g(lo), g_hi = g(hi);
  for (int i = 0; i < 60 && g_lo >= 0.0; ++i) g_lo = g(lo -= 2.0);
  for (int i = 0; i < 60 && g_hi <= 0.0; ++i) g_hi = g(hi += 2.0);
  if (!(g_lo < 0.0 && g_hi > 0.0)) throw estimation_error("Cauchy MLE: score has no sign change");
  std::uintmax_t iters = 200;
  auto [a, b] = boost::math::tools::toms748_solve(
      g, lo, hi, g_lo, g_hi, [](double x, double y) { return std::abs(y - x) <= 1e-13; }, iters);
  return std::exp(0.5 * (a + b));
}

namespace detail {

inline void check_harmonic_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw domain_error("harmonic mean estimator needs 0 < alpha < 1");
  if (std::abs(alpha - 0.5) < 1e-3) {
    throw domain_error("harmonic mean estimator: Gamma(-2 alpha) has a pole at alpha = 0.5");
  }
}

/// -pi Gamma(-2a) sin(pi a) / [Gamma(-a) sin(pi a / 2)]^2
inline double harmonic_ratio(double a) {
  const double g1 = std::tgamma(-a) * std::sin(0.5 * std::numbers::pi * a);
  return -std::numbers::pi * std::tgamma(-2.0 * a) * std::sin(std::numbers::pi * a) / (g1 * g1);
}

}  // namespace detail

/// Asymptotic variance coefficient of the harmonic mean estimator. Finite
/// only below alpha = 0.5; above it the second moment of |y|^{-alpha}
/// diverges and a domain_error is raised.
inline double harmonic_mean_variance_coefficient(double alpha) {
  detail::check_harmonic_alpha(alpha);
  if (alpha > 0.5) throw domain_error("harmonic mean estimator has infinite variance for alpha > 0.5");
  return detail::harmonic_ratio(alpha) - 1.0;
}

/// Harmonic mean estimator with its finite-sample correction factor.
inline double full_info_harmonic_mean(std::span<const double> samples, double alpha) {
  detail::check_harmonic_alpha(alpha);
  if (samples.empty()) throw usage_error("harmonic mean of an empty sample");
  double s = 0.0;
  for (double y : samples) {
    if (y == 0.0) throw domain_error("harmonic mean estimator: zero sample");
    s += std::pow(std::abs(y), -alpha);
  }
  const double n = static_cast<double>(samples.size());
  const double num = -2.0 / std::numbers::pi * std::tgamma(-alpha) * std::sin(0.5 * std::numbers::pi * alpha);
  return num / s * (n - (detail::harmonic_ratio(alpha) - 1.0));
}

}  // namespace qstable
