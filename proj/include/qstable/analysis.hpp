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

// Variance coefficients, threshold optimization, Chernoff tail constants and
// sample complexity for quantized estimators of the stable scale.
//
// Everything here depends on the thresholds only through eta_k = Lambda/C_k,
// equivalently through z_k = C_k/Lambda = 1/eta_k. With phi(z) = z f(z) and
// bin probabilities p_k = F(z_k) - F(z_{k-1}), the Fisher information of
// t = log Lambda per sample is
//
//   I = sum_k (phi(z_k) - phi(z_{k-1}))^2 / p_k,   phi(0) = phi(inf) = 0,
//
// and the asymptotic variance coefficient is V = 1/I.

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "qstable/alpha.hpp"
#include "qstable/error.hpp"
#include "qstable/parallel.hpp"
#include "qstable/power_stable.hpp"

namespace qstable {

/// eta_1 >= eta_2 >= ... >= eta_m > 0, with eta_k = Lambda / C_k.
class EtaVector {
 public:
  EtaVector() = default;
  explicit EtaVector(std::vector<double> etas) : etas_(std::move(etas)) {
    if (etas_.empty()) throw domain_error("eta vector must not be empty");
    for (std::size_t i = 0; i < etas_.size(); ++i) {
      if (!(etas_[i] > 0.0) || !std::isfinite(etas_[i])) throw domain_error("etas must be positive and finite");
      if (i > 0 && etas_[i] > etas_[i - 1]) throw domain_error("etas must be nonincreasing");
    }
  }

  /// Strategy-1 ladder: eta_m given, eta_k = t * eta_{k+1}.
  static EtaVector ladder(double eta_m, double t, std::size_t m) {
    if (!(t >= 1.0)) throw domain_error("ladder ratio must be at least 1");
    std::vector<double> e(m);
    double v = eta_m;
    for (std::size_t k = m; k-- > 0;) {
      e[k] = v;
      v *= t;
    }
    return EtaVector(std::move(e));
  }

  std::size_t size() const noexcept { return etas_.size(); }
  double operator[](std::size_t k) const { return etas_.at(k); }
  std::span<const double> values() const noexcept { return etas_; }

  bool strictly_decreasing() const noexcept {
    for (std::size_t i = 1; i < etas_.size(); ++i) {
      if (!(etas_[i] < etas_[i - 1])) return false;
    }
    return true;
  }

  /// Thresholds C_k = lambda / eta_k, nondecreasing.
  std::vector<double> thresholds(double lambda) const {
    std::vector<double> c;
    c.reserve(etas_.size());
    for (double e : etas_) c.push_back(lambda / e);
    return c;
  }

 private:
  std::vector<double> etas_;
};

/// Distribution quantities at one normalized threshold z = C/Lambda.
struct ThresholdTerms {
  double z = 0.0;
  double cdf = 0.0;
  double sf = 1.0;
  double pdf = 0.0;
  double pdf_prime = 0.0;
};

inline ThresholdTerms threshold_terms(const PowerStableDist& dist, double z, bool with_derivative = false) {
  ThresholdTerms t;
  t.z = z;
  t.cdf = dist.cdf(z);
  t.sf = t.cdf > 0.5 ? dist.sf(z) : 1.0 - t.cdf;
  t.pdf = dist.pdf(z);
  if (with_derivative) t.pdf_prime = dist.pdf_prime(z);
  return t;
}

inline std::vector<ThresholdTerms> threshold_terms(const PowerStableDist& dist, std::span<const double> z,
                                                   bool with_derivative = false) {
  std::vector<ThresholdTerms> out;
  out.reserve(z.size());
  for (double v : z) out.push_back(threshold_terms(dist, v, with_derivative));
  return out;
}

/// Probabilities of the m+1 bins cut at increasing z_1..z_m. Upper bins are
/// differenced on the survival function to avoid cancellation.
inline std::vector<double> bin_probabilities(std::span<const ThresholdTerms> t) {
  std::vector<double> p(t.size() + 1);
  p[0] = t.front().cdf;
  for (std::size_t k = 1; k < t.size(); ++k) {
    p[k] = t[k - 1].cdf <= 0.5 ? t[k].cdf - t[k - 1].cdf : t[k - 1].sf - t[k].sf;
  }
  p[t.size()] = t.back().sf;
  return p;
}

inline std::vector<double> bin_probabilities(const PowerStableDist& dist, std::span<const double> z) {
  return bin_probabilities(threshold_terms(dist, z));
}

namespace detail {

inline std::vector<double> z_from_etas(std::span<const double> etas) {
  std::vector<double> z;
  z.reserve(etas.size());
  for (double e : etas) z.push_back(1.0 / e);
  return z;
}

inline void require_distinct(std::span<const double> etas) {
  for (std::size_t i = 1; i < etas.size(); ++i) {
    if (!(etas[i] < etas[i - 1])) throw domain_error("coincident etas give an empty bin");
  }
}

/// Fisher information of log Lambda per sample.
inline double information(std::span<const ThresholdTerms> t) {
  const auto p = bin_probabilities(t);
  double sum = 0.0;
  double prev = 0.0;
  for (std::size_t k = 0; k <= t.size(); ++k) {
    const double phi = k < t.size() ? t[k].z * t[k].pdf : 0.0;
    const double d = phi - prev;
    if (d != 0.0) {
      if (!(p[k] > 0.0)) return std::numeric_limits<double>::quiet_NaN();
      sum += d * d / p[k];
    }
    prev = phi;
  }
  return sum;
}

inline double variance_zero_plus(std::span<const double> etas) {
  if (etas.size() == 1) {
    const double e = etas[0];
    return std::expm1(e) / (e * e);
  }
  // Three thresholds: the information telescopes into three terms.
  const double e1 = etas[0], e2 = etas[1], e3 = etas[2];
  const double s = (e1 - e2) * (e1 - e2) / (std::exp(e1) - std::exp(e2)) +
                   (e2 - e3) * (e2 - e3) / (std::exp(e2) - std::exp(e3)) + e3 * e3 / std::expm1(e3);
  return 1.0 / s;
}

}  // namespace detail

/// Asymptotic variance coefficient V with Var(Lambda_hat) ~ Lambda^2 V / n.
/// Returns +inf when the scheme carries no information (all thresholds far
/// out in a tail).
inline double variance_coefficient(const PowerStableDist& dist, std::span<const double> etas) {
  if (etas.empty()) throw domain_error("variance_coefficient: no thresholds");
  for (double e : etas) {
    if (!(e > 0.0)) throw domain_error("variance_coefficient: etas must be positive");
  }
  detail::require_distinct(etas);
  if (dist.alpha().is_zero_plus() && (etas.size() == 1 || etas.size() == 3)) return detail::variance_zero_plus(etas);
  const auto z = detail::z_from_etas(etas);
  const double info = detail::information(threshold_terms(dist, z));
  if (std::isnan(info)) throw domain_error("variance_coefficient: zero-probability bin");
  return info > 0.0 ? 1.0 / info : std::numeric_limits<double>::infinity();
}

inline double variance_coefficient(Alpha alpha, const EtaVector& etas, PowerStableOptions options = {}) {
  return variance_coefficient(PowerStableDist{alpha, options}, etas.values());
}

/// Full-information variance coefficient at the anchor alphas (ZeroPlus: 1,
/// Cauchy: 2, Gaussian: 2). Absent for other alphas.
inline std::optional<double> full_information_variance(Alpha alpha) {
  if (alpha.is_zero_plus()) return 1.0;
  if (alpha.is_cauchy() || alpha.is_gaussian()) return 2.0;
  return std::nullopt;
}

struct OptimizerOptions {
  PowerStableOptions dist{};
  /// Stop once a full sweep improves V by less than this (relative).
  double tolerance = 1e-13;
  std::size_t max_sweeps = 5000;
  unsigned threads = 1;
};

struct ThresholdOptimum {
  EtaVector etas;
  double variance = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::size_t sweeps = 0;
  std::size_t start_index = 0;
};

namespace detail {

class LogEtaObjective {
 public:
  static constexpr double kInvalid = 1e30;

  explicit LogEtaObjective(const PowerStableDist& dist) : dist_(dist) {}

  double operator()(std::span<const double> x) const {
    std::vector<double> etas(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (!std::isfinite(x[k]) || std::abs(x[k]) > 30.0) return kInvalid;
      if (k > 0 && x[k - 1] - x[k] < 1e-7) return kInvalid;
      etas[k] = std::exp(x[k]);
    }
    try {
      const double v = variance_coefficient(dist_, etas);
      return std::isfinite(v) && v > 0.0 ? v : kInvalid;
    } catch (const domain_error&) {
      return kInvalid;
    }
  }

 private:
  const PowerStableDist& dist_;
};

template <class F>
std::pair<double, double> line_minimum(F&& f, double lo, double hi, double x0, double f0) {
  if (!(hi > lo)) return {x0, f0};
  auto [x, fx] = boost::math::tools::brent_find_minima(f, lo, hi, 48);
  if (fx < f0) return {x, fx};
  return {x0, f0};
}

struct LocalResult {
  std::vector<double> x;
  double value;
  bool converged;
  std::size_t sweeps;
};

inline LocalResult coordinate_descent(const LogEtaObjective& obj, std::vector<double> x, const OptimizerOptions& opt) {
  const std::size_t m = x.size();
  double fx = obj(x);
  std::vector<double> trial = x;
  std::size_t sweep = 0;
  bool converged = false;
  while (sweep < opt.max_sweeps) {
    ++sweep;
    const std::vector<double> start = x;
    const double f_start = fx;
    for (std::size_t k = 0; k < m; ++k) {
      const double lo = (k + 1 < m ? x[k + 1] : x[k] - 4.0) + 2e-7;
      const double hi = (k > 0 ? x[k - 1] : x[k] + 4.0) - 2e-7;
      auto along = [&](double v) {
        trial = x;
        trial[k] = v;
        return obj(trial);
      };
      std::tie(x[k], fx) = line_minimum(along, lo, hi, x[k], fx);
    }
    // Extrapolate along the net displacement of the sweep; coordinate steps
    // alone crawl along the curved valley that couples neighbouring etas.
    std::vector<double> d(m);
    for (std::size_t k = 0; k < m; ++k) d[k] = x[k] - start[k];
    if (std::any_of(d.begin(), d.end(), [](double v) { return v != 0.0; })) {
      const std::vector<double> base = x;
      auto along = [&](double s) {
        for (std::size_t k = 0; k < m; ++k) trial[k] = base[k] + s * d[k];
        return obj(trial);
      };
      auto [s, fs] = line_minimum(along, -1.0, 8.0, 0.0, fx);
      for (std::size_t k = 0; k < m; ++k) x[k] = base[k] + s * d[k];
      fx = fs;
    }
    if (f_start - fx <= opt.tolerance * f_start) {
      converged = true;
      break;
    }
  }
  return {std::move(x), fx, converged, sweep};
}

/// Best ladder (ratio t) start by a grid scan of log eta_m refined by Brent.
inline std::vector<double> ladder_start(const LogEtaObjective& obj, std::size_t m, double t) {
  const double lt = std::log(t);
  auto make = [&](double xm) {
    std::vector<double> x(m);
    for (std::size_t k = 0; k < m; ++k) x[k] = xm + lt * static_cast<double>(m - 1 - k);
    return x;
  };
  auto along = [&](double xm) { return obj(make(xm)); };
  const double lo = std::log(1e-3), hi = std::log(30.0);
  constexpr int kGrid = 90;
  double best_x = lo, best_f = along(lo);
  for (int i = 1; i <= kGrid; ++i) {
    const double xm = lo + (hi - lo) * i / kGrid;
    const double f = along(xm);
    if (f < best_f) {
      best_f = f;
      best_x = xm;
    }
  }
  const double step = (hi - lo) / kGrid;
  auto [xm, fm] = line_minimum(along, best_x - step, best_x + step, best_x, best_f);
  return make(xm);
}

}  // namespace detail

/// Minimizes V over eta_1 > ... > eta_m for m in {1, 3, 5}. Multi-start
/// coordinate descent on log eta from geometric ladders t in {2, 3, 4}; the
/// lowest V wins, ties going to the earlier start. `converged` is false when
/// the best start hit the sweep limit; the best iterate is still returned.
inline ThresholdOptimum optimize_thresholds(Alpha alpha, std::size_t m, OptimizerOptions opt = {}) {
  if (m != 1 && m != 3 && m != 5) throw usage_error("optimize_thresholds supports m in {1, 3, 5}");
  const PowerStableDist dist{alpha, opt.dist};
  const detail::LogEtaObjective obj(dist);

  if (m == 1) {
    auto f = [&](double x) { return obj(std::span<const double>(&x, 1)); };
    std::vector<double> x = detail::ladder_start(obj, 1, 2.0);
    auto [xm, fm] = detail::line_minimum(f, x[0] - 0.5, x[0] + 0.5, x[0], f(x[0]));
    ThresholdOptimum out;
    out.etas = EtaVector({std::exp(xm)});
    out.variance = fm;
    out.converged = fm < detail::LogEtaObjective::kInvalid;
    out.sweeps = 1;
    return out;
  }

  const std::vector<double> ratios = {2.0, 3.0, 4.0};
  std::vector<detail::LocalResult> results(ratios.size());
  parallel_for(ratios.size(), opt.threads, [&](std::size_t i) {
    results[i] = detail::coordinate_descent(obj, detail::ladder_start(obj, m, ratios[i]), opt);
  });
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i) {
    if (results[i].value < results[best].value) best = i;
  }
  ThresholdOptimum out;
  std::vector<double> etas;
  for (double x : results[best].x) etas.push_back(std::exp(x));
  out.etas = EtaVector(std::move(etas));
  out.variance = results[best].value;
  out.converged = results[best].converged && out.variance < detail::LogEtaObjective::kInvalid;
  out.sweeps = results[best].sweeps;
  out.start_index = best;
  return out;
}

/// Chernoff constants for the 1-bit estimator. exponent_* = epsilon^2 / G_*;
/// the tail probability bound is exp(-n * exponent). At epsilon = 0 the
/// exponents vanish and G takes its limit 2V. The left constant exists only
/// for epsilon in [0, 1].
struct TailConstants {
  double epsilon = 0.0;
  double g_right = 0.0;
  std::optional<double> g_left;
  double exponent_right = 0.0;
  std::optional<double> exponent_left;
};

namespace detail {

/// Bernoulli relative entropy KL(q || p), given q, 1-q, p, 1-p.
inline double bernoulli_kl(double q, double q_sf, double p, double p_sf) {
  double r = 0.0;
  if (q > 0.0) r += q * std::log(q / p);
  if (q_sf > 0.0) r += q_sf * std::log(q_sf / p_sf);
  return std::max(r, 0.0);
}

}  // namespace detail

inline TailConstants tail_constants(const PowerStableDist& dist, double eta, double epsilon) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw domain_error("tail_constants: eta must be positive");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw domain_error("tail_constants: epsilon must be nonnegative");
  TailConstants out;
  out.epsilon = epsilon;
  const auto base = threshold_terms(dist, 1.0 / eta);
  if (epsilon == 0.0) {
    const double v = eta * eta * base.cdf * base.sf / (base.pdf * base.pdf);
    out.g_right = 2.0 * v;
    out.g_left = 2.0 * v;
    out.exponent_left = 0.0;
    return out;
  }
  const double e2 = epsilon * epsilon;
  const auto right = threshold_terms(dist, 1.0 / ((1.0 + epsilon) * eta));
  out.exponent_right = detail::bernoulli_kl(right.cdf, right.sf, base.cdf, base.sf);
  out.g_right = e2 / out.exponent_right;
  if (epsilon < 1.0) {
    const auto left = threshold_terms(dist, 1.0 / ((1.0 - epsilon) * eta));
    out.exponent_left = detail::bernoulli_kl(left.cdf, left.sf, base.cdf, base.sf);
  } else if (epsilon == 1.0) {
    // Threshold at infinity: the event is n_1 = n, probability F(1/eta)^n.
    out.exponent_left = -std::log(base.cdf);
  }
  if (out.exponent_left) out.g_left = e2 / *out.exponent_left;
  return out;
}

inline TailConstants tail_constants(Alpha alpha, double eta, double epsilon, PowerStableOptions options = {}) {
  return tail_constants(PowerStableDist{alpha, options}, eta, epsilon);
}

/// Real-valued sufficient sample size max(G_R, G_L) / epsilon^2 * log(2/delta).
inline double chernoff_sample_bound(const TailConstants& tc, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw domain_error("delta must lie in (0, 1)");
  const double g = std::max(tc.g_right, tc.g_left.value_or(0.0));
  return g / (tc.epsilon * tc.epsilon) * std::log(2.0 / delta);
}

/// Sample size guaranteeing two-sided relative error epsilon with failure
/// probability at most delta. exact = false: the closed-form bound (rounded
/// up). exact = true: the smallest n with exp(-n e_R) + exp(-n e_L) <= delta.
inline std::uint64_t sample_complexity(const PowerStableDist& dist, double eta, double epsilon, double delta,
                                       bool exact) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw domain_error("sample_complexity: epsilon must lie in (0, 1]");
  if (!(delta > 0.0 && delta < 1.0)) throw domain_error("sample_complexity: delta must lie in (0, 1)");
  const TailConstants tc = tail_constants(dist, eta, epsilon);
  const double bound = chernoff_sample_bound(tc, delta);
  if (!std::isfinite(bound) || bound > 1e18) throw domain_error("sample_complexity: bound is not finite");
  const auto upper = static_cast<std::uint64_t>(std::max(1.0, std::ceil(bound)));
  if (!exact) return upper;
  auto ok = [&](std::uint64_t n) {
    const double nn = static_cast<double>(n);
    return std::exp(-nn * tc.exponent_right) + std::exp(-nn * tc.exponent_left.value_or(0.0)) <= delta;
  };
  std::uint64_t lo = 0, hi = upper;  // ok(hi) holds, ok(lo) does not
  while (!ok(hi)) hi *= 2;
  while (hi - lo > 1) {
    const std::uint64_t mid = lo + (hi - lo) / 2;
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

inline std::uint64_t sample_complexity(Alpha alpha, double eta, double epsilon, double delta, bool exact,
                                       PowerStableOptions options = {}) {
  return sample_complexity(PowerStableDist{alpha, options}, eta, epsilon, delta, exact);
}

/// O(1/n) relative bias coefficient of the 1-bit MLE, E(Lambda_hat) ~
/// Lambda (1 + b/n), at the population frequency p = F(1/eta):
/// b = p (1-p) (eta^2 / f^2 + eta f' / (2 f^3)), f and f' at 1/eta.
inline double bias_coefficient_1bit(const PowerStableDist& dist, double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw domain_error("bias_coefficient_1bit: eta must be positive");
  const auto t = threshold_terms(dist, 1.0 / eta, true);
  const double f = t.pdf;
  return t.cdf * t.sf * (eta * eta / (f * f) + eta * t.pdf_prime / (2.0 * f * f * f));
}

inline double bias_coefficient_1bit(Alpha alpha, double eta, PowerStableOptions options = {}) {
  return bias_coefficient_1bit(PowerStableDist{alpha, options}, eta);
}

/// The same coefficient written in terms of the observed frequency
/// p = n_1/n, as used by the bias-corrected estimator. Closed forms at the
/// anchor alphas; the general expression with eta = 1/F^{-1}(p) otherwise.
inline double bias_coefficient_from_frequency(const PowerStableDist& dist, double p) {
  if (!(p > 0.0 && p < 1.0)) throw domain_error("bias coefficient needs a frequency in (0, 1)");
  const Alpha a = dist.alpha();
  if (a.is_zero_plus()) {
    const double l = -std::log(p);
    return (1.0 / p - 1.0) / (2.0 * l);
  }
  if (a.is_cauchy()) {
    const double tn = std::tan(0.5 * std::numbers::pi * p);
    return std::numbers::pi * std::numbers::pi / 4.0 * p * (1.0 - p) * (1.0 + 1.0 / (tn * tn));
  }
  if (a.is_gaussian()) {
    const double q = 0.5 * dist.inverse_cdf(p);  // chi-square(1) quantile
    return std::numbers::pi / 2.0 * p * (1.0 - p) * (3.0 / q - 1.0) * std::exp(q);
  }
  return bias_coefficient_1bit(dist, 1.0 / dist.inverse_cdf(p));
}

}  // namespace qstable
