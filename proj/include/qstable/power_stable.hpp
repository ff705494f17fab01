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

// Sampling from symmetric alpha-stable laws with the Chambers-Mallows-Stuck
// transform, and evaluation of the distribution of |S(alpha,1)|^alpha.
//
// For a real alpha != 1 the power-stable variable factors as
//
//   |S|^alpha = G(u) * w^(alpha - 1),   u ~ U(0, pi/2), w ~ Exp(1),
//   G(u) = cos((1-alpha) u)^(1-alpha) * sin(alpha u)^alpha / cos(u),
//
// with G increasing on (0, pi/2). Conditioning on u, the event |S|^alpha <= z
// is {w >= h} for alpha < 1 and {w <= h} for alpha > 1, where
// h(u, z) = (G(u) / z)^(1 / (1 - alpha)). Hence
//
//   F(z) = (2/pi) * int_0^{pi/2} exp(-h) du          (alpha < 1)
//   F(z) = (2/pi) * int_0^{pi/2} (1 - exp(-h)) du    (alpha > 1)
//
// and dh/dz = -h / ((1 - alpha) z) gives the density and its derivative under
// the integral sign. The integration range is split at the point where
// G(u) = z (h = 1), which is where the integrand changes fastest.

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <utility>

#include "qstable/alpha.hpp"
#include "qstable/error.hpp"
#include "qstable/rng.hpp"

namespace qstable {

/// The CMS transform of an angle u in (-pi/2, pi/2) and w > 0 into a draw
/// of S(alpha, 1), for a real alpha in (0, 2].
inline double cms_stable(double alpha, double u, double w) noexcept {
  if (alpha == 1.0) return std::tan(u);
  const double sn = std::sin(alpha * u);
  const double log_mag = std::log(std::abs(sn)) - std::log(std::cos(u)) / alpha +
                         (1.0 - alpha) / alpha * (std::log(std::cos(u - alpha * u)) - std::log(w));
  return std::copysign(std::exp(log_mag), sn);
}

/// |cms_stable(alpha, u, w)|^alpha, computed in the log domain.
inline double cms_power_stable(double alpha, double u, double w) noexcept {
  if (alpha == 1.0) return std::abs(std::tan(u));
  const double log_val = alpha * std::log(std::abs(std::sin(alpha * u))) - std::log(std::cos(u)) +
                         (1.0 - alpha) * (std::log(std::cos(u - alpha * u)) - std::log(w));
  return std::exp(log_val);
}

/// One draw from S(alpha, 1). ZeroPlus has no finite-alpha sampler.
inline double sample_stable(Alpha alpha, RngStream& rng) {
  if (alpha.is_zero_plus()) throw domain_error("sample_stable: ZeroPlus is not directly sampleable");
  const double u = std::numbers::pi * (rng.uniform01() - 0.5);
  const double w = rng.exponential();
  return cms_stable(alpha.value(), u, w);
}

/// One draw of |S(alpha, 1)|^alpha. For ZeroPlus this is 1/w, w ~ Exp(1), the
/// limiting law as alpha -> 0+. Consumes the same (u, w) pair as sample_stable.
inline double sample_power_stable(Alpha alpha, RngStream& rng) {
  const double u = std::numbers::pi * (rng.uniform01() - 0.5);
  const double w = rng.exponential();
  if (alpha.is_zero_plus()) return 1.0 / w;
  return cms_power_stable(alpha.value(), u, w);
}

struct PowerStableOptions {
  /// Resolution of the quadrature for general alpha. The tanh-sinh rule is
  /// refined until the error estimate meets `tolerance` or the node budget
  /// (about 2^levels points per half-range) is exhausted.
  std::size_t quadrature_nodes = 2048;
  /// Target absolute accuracy of cdf / sf.
  double tolerance = 1e-8;
};

/// cdf, survival function, pdf and pdf derivative of |S(alpha,1)|^alpha.
/// Immutable after construction; safe for concurrent use.
class PowerStableDist {
 public:
  explicit PowerStableDist(Alpha alpha, PowerStableOptions options = {})
      : alpha_(alpha), options_(options) {
    if (options_.quadrature_nodes == 0) throw domain_error("quadrature_nodes must be positive");
    if (!(options_.tolerance > 0.0)) throw domain_error("tolerance must be positive");
    if (alpha.is_zero_plus()) {
      kind_ = Kind::zero_plus;
    } else if (alpha.is_cauchy()) {
      kind_ = Kind::cauchy;
    } else if (alpha.is_gaussian()) {
      kind_ = Kind::gaussian;
    } else {
      kind_ = Kind::general;
      a_ = alpha.value();
      k_ = 1.0 / (1.0 - a_);
    }
  }

  Alpha alpha() const noexcept { return alpha_; }
  const PowerStableOptions& options() const noexcept { return options_; }
  bool closed_form() const noexcept { return kind_ != Kind::general; }

  double cdf(double z) const {
    check_z(z);
    if (std::isinf(z)) return 1.0;
    switch (kind_) {
      case Kind::zero_plus: return std::exp(-1.0 / z);
      case Kind::cauchy: return kTwoOverPi * std::atan(z);
      case Kind::gaussian: return std::erf(0.5 * std::sqrt(z));
      case Kind::general: break;
    }
    return a_ < 1.0 ? integrate(z, Integrand::exp_neg) : integrate(z, Integrand::one_minus_exp_neg);
  }

  /// 1 - cdf(z) without cancellation in the upper tail.
  double sf(double z) const {
    check_z(z);
    if (std::isinf(z)) return 0.0;
    switch (kind_) {
      case Kind::zero_plus: return -std::expm1(-1.0 / z);
      case Kind::cauchy: return kTwoOverPi * std::atan(1.0 / z);
      case Kind::gaussian: return std::erfc(0.5 * std::sqrt(z));
      case Kind::general: break;
    }
    return a_ < 1.0 ? integrate(z, Integrand::one_minus_exp_neg) : integrate(z, Integrand::exp_neg);
  }

  double pdf(double z) const {
    check_z(z);
    if (std::isinf(z)) return 0.0;
    switch (kind_) {
      case Kind::zero_plus: return std::exp(-1.0 / z) / (z * z);
      case Kind::cauchy: return kTwoOverPi / (1.0 + z * z);
      case Kind::gaussian: return std::exp(-0.25 * z) / (2.0 * std::sqrt(std::numbers::pi * z));
      case Kind::general: break;
    }
    return std::abs(k_) / z * integrate(z, Integrand::h_exp_neg);
  }

  double pdf_prime(double z) const {
    check_z(z);
    if (std::isinf(z)) return 0.0;
    switch (kind_) {
      case Kind::zero_plus: {
        const double e = std::exp(-1.0 / z);
        return e * (-2.0 / (z * z * z) + 1.0 / (z * z * z * z));
      }
      case Kind::cauchy: {
        const double q = 1.0 + z * z;
        return kTwoOverPi * (-2.0 * z) / (q * q);
      }
      case Kind::gaussian: {
        const double e = std::exp(-0.25 * z) / std::sqrt(std::numbers::pi);
        return -e / (4.0 * z * std::sqrt(z)) - e / (8.0 * std::sqrt(z));
      }
      case Kind::general: break;
    }
    const double f = pdf(z);
    const double sign = a_ < 1.0 ? 1.0 : -1.0;
    return -f / z - sign * k_ * k_ / (z * z) * integrate(z, Integrand::h_one_minus_h_exp_neg);
  }

  /// z with cdf(z) = p.
  double inverse_cdf(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw domain_error("inverse_cdf: p must lie in (0, 1)");
    switch (kind_) {
      case Kind::zero_plus: return -1.0 / std::log(p);
      case Kind::cauchy:
        return p <= 0.5 ? std::tan(0.5 * std::numbers::pi * p) : 1.0 / std::tan(0.5 * std::numbers::pi * (1.0 - p));
      case Kind::gaussian: {
        const double r = p <= 0.5 ? boost::math::erf_inv(p) : boost::math::erfc_inv(1.0 - p);
        return 4.0 * r * r;
      }
      case Kind::general: break;
    }
    return solve_general(p);
  }

 private:
  enum class Kind { zero_plus, cauchy, gaussian, general };
  enum class Integrand { exp_neg, one_minus_exp_neg, h_exp_neg, h_one_minus_h_exp_neg };

  static constexpr double kTwoOverPi = 2.0 / std::numbers::pi;
  static constexpr double kHalfPi = 0.5 * std::numbers::pi;

  static void check_z(double z) {
    if (!(z > 0.0)) throw domain_error("power-stable distribution evaluated at non-positive z");
  }

  // log G as a function of the angle u measured from 0 and of v = pi/2 - u
  // (the latter keeps cos(u) = sin(v) accurate near the right end).
  double log_g(double u, double v) const {
    return (1.0 - a_) * std::log(std::cos((1.0 - a_) * u)) + a_ * std::log(std::sin(a_ * u)) - std::log(std::sin(v));
  }

  static double apply(Integrand which, double log_h) {
    if (log_h > 700.0) {
      return which == Integrand::one_minus_exp_neg ? 1.0 : 0.0;
    }
    const double h = std::exp(log_h);
    switch (which) {
      case Integrand::exp_neg: return std::exp(-h);
      case Integrand::one_minus_exp_neg: return -std::expm1(-h);
      case Integrand::h_exp_neg: return std::exp(log_h - h);
      case Integrand::h_one_minus_h_exp_neg: return (1.0 - h) * std::exp(log_h - h);
    }
    return 0.0;
  }

  // Angle where G(u) = z, i.e. where h crosses 1.
  double breakpoint(double log_z) const {
    double lo = 0.0, hi = kHalfPi;
    for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (log_g(mid, kHalfPi - mid) < log_z) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    return 0.5 * (lo + hi);
  }

  double integrate(double z, Integrand which) const {
    const double log_z = std::log(z);
    const double split = breakpoint(log_z);
    const auto levels = static_cast<std::size_t>(std::max(4, static_cast<int>(std::bit_width(options_.quadrature_nodes))));
    boost::math::quadrature::tanh_sinh<double> rule(levels);
    const double tol = 0.1 * options_.tolerance;
    auto left = [&](double u) { return apply(which, k_ * (log_g(u, kHalfPi - u) - log_z)); };
    auto right = [&](double v) { return apply(which, k_ * (log_g(kHalfPi - v, v) - log_z)); };
    double sum = 0.0;
    if (split > 0.0) sum += rule.integrate(left, 0.0, split, tol);
    if (split < kHalfPi) sum += rule.integrate(right, 0.0, kHalfPi - split, tol);
    return kTwoOverPi * sum;
  }

  double solve_general(double p) const {
    const bool upper = p > 0.5;
    const double target = upper ? 1.0 - p : p;
    // Residual in the numerically favourable tail; increasing in log z.
    auto residual = [&](double log_z) {
      const double z = std::exp(log_z);
      return upper ? target - sf(z) : cdf(z) - target;
    };
    double lo = -1.0, hi = 1.0;
    double f_lo = residual(lo), f_hi = residual(hi);
    for (int i = 0; f_lo > 0.0 && i < 60; ++i) {
      hi = lo;
      f_hi = f_lo;
      lo = 2.0 * lo - 1.0;
      f_lo = residual(lo);
    }
    for (int i = 0; f_hi < 0.0 && i < 60; ++i) {
      lo = hi;
      f_lo = f_hi;
      hi = 2.0 * hi + 1.0;
      f_hi = residual(hi);
    }
    if (f_lo > 0.0 || f_hi < 0.0) throw estimation_error("inverse_cdf: could not bracket the quantile");
    if (f_lo == 0.0) return std::exp(lo);
    if (f_hi == 0.0) return std::exp(hi);
    std::uintmax_t iters = 200;
    auto tol = [](double a, double b) { return std::abs(b - a) <= 1e-13; };
    const auto [a, b] = boost::math::tools::toms748_solve(residual, lo, hi, f_lo, f_hi, tol, iters);
    return std::exp(0.5 * (a + b));
  }

  Alpha alpha_;
  PowerStableOptions options_;
  Kind kind_ = Kind::general;
  double a_ = 0.0;  // real alpha (general kind only)
  double k_ = 0.0;  // 1 / (1 - alpha)
};

}  // namespace qstable
