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

// One-scan 1-bit compressed sensing: sign recovery of a sparse vector from
// the signs of stable random projections, with the sparsity K replaced by a
// quantized estimate of sum |x_i|^alpha.
//
// The N x M design is never stored. Entry (i, j) is regenerated from a keyed
// counter-based generator: (u_ij, w_ij) come from Philox(seed; i, j) and
// s_ij is their CMS transform.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "qstable/alpha.hpp"
#include "qstable/analysis.hpp"
#include "qstable/coding.hpp"
#include "qstable/error.hpp"
#include "qstable/estimators.hpp"
#include "qstable/parallel.hpp"
#include "qstable/power_stable.hpp"
#include "qstable/rng.hpp"

namespace qstable {

/// K-sparse vector of dimension N. Indices are 0-based.
class SparseSignal {
 public:
  SparseSignal(std::size_t N, std::vector<std::pair<std::size_t, double>> support)
      : N_(N), support_(std::move(support)) {
    std::set<std::size_t> seen;
    for (const auto& [i, v] : support_) {
      if (i >= N_) throw domain_error("sparse signal index out of range");
      if (v == 0.0 || !std::isfinite(v)) throw domain_error("sparse signal values must be nonzero and finite");
      if (!seen.insert(i).second) throw domain_error("sparse signal indices must be distinct");
    }
    std::sort(support_.begin(), support_.end());
  }

  std::size_t dimension() const noexcept { return N_; }
  std::size_t K() const noexcept { return support_.size(); }
  std::span<const std::pair<std::size_t, double>> support() const noexcept { return support_; }

  /// sum |x_i|^alpha, the stable scale of the projections.
  double lambda(double alpha) const {
    double s = 0.0;
    for (const auto& [i, v] : support_) s += std::pow(std::abs(v), alpha);
    return s;
  }

  std::vector<int> signs() const {
    std::vector<int> s(N_, 0);
    for (const auto& [i, v] : support_) s[i] = v > 0.0 ? 1 : -1;
    return s;
  }

 private:
  std::size_t N_;
  std::vector<std::pair<std::size_t, double>> support_;
};

struct DesignEntry {
  double u;  // uniform on (-pi/2, pi/2)
  double w;  // Exp(1)
};

/// Regenerable N x M design with S(alpha, 1) entries.
class DesignMatrixSeeded {
 public:
  static constexpr std::uint32_t kDomain = 0x44534e47;  // "DSNG"

  DesignMatrixSeeded(std::size_t N, std::size_t M, double alpha = 0.05, std::uint64_t seed = 0)
      : N_(N), M_(M), alpha_(alpha), seed_(seed) {
    if (!(alpha > 0.0 && alpha <= 2.0)) throw domain_error("design alpha must lie in (0, 2]");
    if (N > std::numeric_limits<std::uint32_t>::max()) throw domain_error("design dimension too large");
  }

  std::size_t N() const noexcept { return N_; }
  std::size_t M() const noexcept { return M_; }
  double alpha() const noexcept { return alpha_; }
  std::uint64_t seed() const noexcept { return seed_; }

  DesignEntry entry(std::size_t i, std::size_t j) const noexcept {
    const auto bits = keyed_bits(seed_, kDomain, static_cast<std::uint32_t>(i), j);
    return {std::numbers::pi * (open_unit(bits[0]) - 0.5), -std::log(open_unit(bits[1]))};
  }

  double value(std::size_t i, std::size_t j) const noexcept {
    const DesignEntry e = entry(i, j);
    return cms_stable(alpha_, e.u, e.w);
  }

 private:
  std::size_t N_, M_;
  double alpha_;
  std::uint64_t seed_;
};

struct MeasurementSet {
  std::vector<double> y;
  std::vector<int> signs;
};

/// sign(0) and NaN (overflowing heavy-tailed products) map to +1.
inline int measurement_sign(double y) noexcept { return y < 0.0 ? -1 : 1; }

/// y_j = sum_i x_i s_ij for j < M; touches only the support columns.
inline MeasurementSet measure(const SparseSignal& x, const DesignMatrixSeeded& design) {
  if (x.dimension() != design.N()) throw usage_error("measure: signal and design dimensions differ");
  MeasurementSet out;
  out.y.assign(design.M(), 0.0);
  for (const auto& [i, v] : x.support()) {
    for (std::size_t j = 0; j < design.M(); ++j) out.y[j] += v * design.value(i, j);
  }
  out.signs.resize(design.M());
  std::transform(out.y.begin(), out.y.end(), out.signs.begin(), measurement_sign);
  return out;
}

struct RecoveryResult {
  std::vector<int> signs;
  /// Coordinates where Q+ and Q- were both positive; these are set to 0.
  std::size_t conflicts = 0;
};

/// Recovery for several K values and several measurement prefixes M_1 <
/// M_2 < ... in one pass over the design. result[k][p] uses K_hats[k] and
/// the first prefixes[p] measurements.
inline std::vector<std::vector<RecoveryResult>> recover_signs_batch(std::span<const int> signs,
                                                                    const DesignMatrixSeeded& design,
                                                                    std::span<const double> K_hats,
                                                                    std::span<const std::size_t> prefixes,
                                                                    unsigned threads = 1) {
  if (prefixes.empty() || K_hats.empty()) throw usage_error("recover_signs: nothing to recover");
  for (std::size_t p = 0; p < prefixes.size(); ++p) {
    if (prefixes[p] == 0 || (p > 0 && prefixes[p] <= prefixes[p - 1])) {
      throw usage_error("recover_signs: prefixes must be positive and increasing");
    }
  }
  if (prefixes.back() > signs.size()) throw usage_error("recover_signs: more measurements requested than given");
  for (double k : K_hats) {
    if (!(k > 0.0) || !std::isfinite(k)) throw domain_error("recover_signs: K estimate must be positive");
  }
  const std::size_t N = design.N(), nk = K_hats.size(), np = prefixes.size();
  // decisions[i][k * np + p]: +1, -1, 0, or 2 for a conflict.
  std::vector<std::vector<signed char>> decisions(N, std::vector<signed char>(nk * np));
  parallel_for(N, threads, [&](std::size_t i) {
    std::vector<double> qp(nk, 0.0), qm(nk, 0.0);
    std::size_t p = 0;
    for (std::size_t j = 0; j < prefixes.back(); ++j) {
      const DesignEntry e = design.entry(i, j);
      const double sgn = (e.u > 0.0 ? 1.0 : -1.0) * signs[j];
      for (std::size_t k = 0; k < nk; ++k) {
        const double a = sgn * std::exp(-(K_hats[k] - 1.0) * e.w);
        // For K < 1 the factor can exceed one; log of a nonpositive
        // argument is -inf, which keeps that Q negative.
        qp[k] += a > -1.0 ? std::log1p(a) : -std::numeric_limits<double>::infinity();
        qm[k] += a < 1.0 ? std::log1p(-a) : -std::numeric_limits<double>::infinity();
      }
      if (j + 1 == prefixes[p]) {
        for (std::size_t k = 0; k < nk; ++k) {
          signed char d = 0;
          if (qp[k] > 0.0 && qm[k] > 0.0) {
            d = 2;
          } else if (qp[k] > 0.0) {
            d = 1;
          } else if (qm[k] > 0.0) {
            d = -1;
          }
          decisions[i][k * np + p] = d;
        }
        ++p;
      }
    }
  });
  std::vector<std::vector<RecoveryResult>> out(nk, std::vector<RecoveryResult>(np));
  for (std::size_t k = 0; k < nk; ++k) {
    for (std::size_t q = 0; q < np; ++q) {
      RecoveryResult& r = out[k][q];
      r.signs.resize(N);
      for (std::size_t i = 0; i < N; ++i) {
        const signed char d = decisions[i][k * np + q];
        if (d == 2) {
          ++r.conflicts;
          r.signs[i] = 0;
        } else {
          r.signs[i] = d;
        }
      }
    }
  }
  return out;
}

/// Estimated signs: +1 if Q+ > 0, -1 if Q- > 0, otherwise 0.
inline RecoveryResult recover_signs(std::span<const int> signs, const DesignMatrixSeeded& design, double K_hat,
                                    unsigned threads = 1) {
  const std::size_t M = signs.size();
  auto r = recover_signs_batch(signs, design, std::span<const double>(&K_hat, 1),
                               std::span<const std::size_t>(&M, 1), threads);
  return std::move(r[0][0]);
}

/// sum_i |sgn_hat(x_i) - sgn(x_i)| / K.
inline double recovery_error(std::span<const int> estimated, const SparseSignal& truth) {
  if (truth.K() == 0) throw usage_error("recovery_error: signal has no nonzeros");
  if (estimated.size() != truth.dimension()) throw usage_error("recovery_error: dimension mismatch");
  const auto s = truth.signs();
  double e = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) e += std::abs(estimated[i] - s[i]);
  return e / static_cast<double>(truth.K());
}

/// n projections y_j = sum_i x_i s_ij with fresh S(alpha, 1) entries.
inline std::vector<double> auxiliary_measurements(const SparseSignal& x, double alpha, std::size_t n,
                                                  RngStream& rng) {
  const Alpha a(alpha);
  std::vector<double> y(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (const auto& [i, v] : x.support()) y[j] += v * sample_stable(a, rng);
  }
  return y;
}

/// Bias-corrected ZeroPlus estimate of sum |x_i|^alpha from the quantized
/// projections y. The thresholds are set from the true scale, C = Lambda/eta
/// (one threshold), or from the ladder (9 eta, 3 eta, eta) (two bits).
inline double estimate_K_from_measurements(std::span<const double> y, double lambda_true, double alpha,
                                           double eta, int scheme_bits) {
  if (y.empty()) throw usage_error("estimate_K: need at least one measurement");
  if (!(eta > 0.0)) throw domain_error("estimate_K: eta must be positive");
  std::vector<double> z(y.size());
  std::transform(y.begin(), y.end(), z.begin(), [alpha](double v) { return std::pow(std::abs(v), alpha); });
  const PowerStableDist zp{Alpha::zero_plus()};
  EstimatorOptions opt;
  opt.compute_variance = false;
  if (scheme_bits == 1) {
    const ThresholdScheme scheme({lambda_true / eta}, Alpha::zero_plus());
    return mle_1bit(count_powered(z, scheme), scheme[0], zp, opt).corrected;
  }
  if (scheme_bits == 2) {
    const ThresholdScheme scheme(EtaVector::ladder(eta, 3.0, 3).thresholds(lambda_true), Alpha::zero_plus());
    return mle_multibit(count_powered(z, scheme), scheme, zp, opt).corrected;
  }
  throw usage_error("estimate_K: scheme_bits must be 1 or 2");
}

inline double estimate_K_pipeline(const SparseSignal& x, double alpha, std::size_t n, double eta, int scheme_bits,
                                  RngStream& rng) {
  if (n == 0) throw usage_error("estimate_K: n must be at least 1");
  const auto y = auxiliary_measurements(x, alpha, n, rng);
  return estimate_K_from_measurements(y, x.lambda(alpha), alpha, eta, scheme_bits);
}

}  // namespace qstable
