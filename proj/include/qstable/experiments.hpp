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

// Reproducible experiment drivers behind the command-line tool. Each driver
// returns plain rows and has a matching CSV writer. Replicates are spread
// over threads by index, each with its own RNG stream, and reduced in index
// order, so outputs do not depend on the thread count.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "qstable/alpha.hpp"
#include "qstable/analysis.hpp"
#include "qstable/coding.hpp"
#include "qstable/cs_recovery.hpp"
#include "qstable/estimators.hpp"
#include "qstable/parallel.hpp"
#include "qstable/power_stable.hpp"
#include "qstable/rng.hpp"
#include "qstable/tabulation.hpp"

namespace qstable {

/// Shortest text that round-trips the double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string format_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

/// Evenly spaced grid, in log space when `log_spacing`.
inline std::vector<double> make_grid(double lo, double hi, std::size_t points, bool log_spacing) {
  if (points == 0) throw usage_error("grid needs at least one point");
  if (!(hi >= lo) || (log_spacing && !(lo > 0.0))) throw usage_error("invalid grid bounds");
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double f = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
    g[i] = log_spacing ? std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo))) : lo + f * (hi - lo);
  }
  return g;
}

/// Nearest-rank quantile of unsorted data.
inline double quantile(std::vector<double> data, double q) {
  if (data.empty()) throw usage_error("quantile of an empty sample");
  std::sort(data.begin(), data.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(data.size())));
  return data[std::clamp<std::size_t>(rank, 1, data.size()) - 1];
}

// ---------------------------------------------------------------- variance

struct VarianceCurveConfig {
  Alpha alpha = Alpha::zero_plus();
  std::size_t m = 1;
  /// "ladder": eta_k = t eta_{k+1} with eta_m on the grid (one curve per t).
  /// "sweep": three thresholds with eta_1 fixed, one curve per eta_3, eta_2
  /// swept strictly between them.
  std::string strategy = "ladder";
  double eta_min = 0.05;
  double eta_max = 5.0;
  std::size_t points = 100;
  bool log_grid = true;
  std::vector<double> ratios = {2.0, 3.0, 4.0};
  double eta1 = 5.0;
  std::vector<double> eta3_values = {0.5, 0.75, 1.0};
  PowerStableOptions dist{};
};

struct VarianceRow {
  std::string strategy;
  std::optional<double> t;
  std::vector<double> etas;
  double V;
};

inline std::vector<VarianceRow> variance_curve(const VarianceCurveConfig& cfg) {
  if (cfg.m == 0) throw usage_error("m must be at least 1");
  const PowerStableDist dist{cfg.alpha, cfg.dist};
  auto eval = [&](const std::vector<double>& e) {
    try {
      return variance_coefficient(dist, e);
    } catch (const domain_error&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  std::vector<VarianceRow> rows;
  if (cfg.m == 1) {
    for (double e : make_grid(cfg.eta_min, cfg.eta_max, cfg.points, cfg.log_grid)) {
      rows.push_back({"single", std::nullopt, {e}, eval({e})});
    }
  } else if (cfg.strategy == "ladder") {
    if (cfg.ratios.empty()) throw usage_error("ladder strategy needs at least one ratio t");
    for (double t : cfg.ratios) {
      if (!(t > 1.0)) throw usage_error("ladder ratio t must exceed 1");
      for (double e : make_grid(cfg.eta_min, cfg.eta_max, cfg.points, cfg.log_grid)) {
        const EtaVector v = EtaVector::ladder(e, t, cfg.m);
        std::vector<double> etas(v.values().begin(), v.values().end());
        rows.push_back({"ladder", t, etas, eval(etas)});
      }
    }
  } else if (cfg.strategy == "sweep") {
    if (cfg.m != 3) throw usage_error("sweep strategy is defined for m = 3");
    for (double e3 : cfg.eta3_values) {
      if (!(e3 > 0.0 && e3 < cfg.eta1)) throw usage_error("sweep needs 0 < eta_3 < eta_1");
      for (std::size_t i = 0; i < cfg.points; ++i) {
        const double f = static_cast<double>(i + 1) / static_cast<double>(cfg.points + 1);
        const double e2 = cfg.log_grid ? e3 * std::pow(cfg.eta1 / e3, f) : e3 + f * (cfg.eta1 - e3);
        std::vector<double> etas = {cfg.eta1, e2, e3};
        rows.push_back({"sweep", std::nullopt, etas, eval(etas)});
      }
    }
  } else {
    throw usage_error("unknown strategy '" + cfg.strategy + "' (expected ladder or sweep)");
  }
  return rows;
}

inline void write_variance_csv(std::ostream& os, const std::vector<VarianceRow>& rows, std::size_t m) {
  os << "strategy,t";
  for (std::size_t k = 1; k <= m; ++k) os << ",eta_" << k;
  os << ",V\n";
  for (const auto& r : rows) {
    os << r.strategy << ',' << format_optional(r.t);
    for (double e : r.etas) os << ',' << format_double(e);
    os << ',' << format_double(r.V) << '\n';
  }
}

// ---------------------------------------------------------------- MSE

struct SimulateMseConfig {
  Alpha alpha_gen = Alpha::zero_plus();
  Alpha alpha_est = Alpha::zero_plus();
  std::vector<double> etas = {1.594};
  double lambda = 1.0;
  std::vector<std::size_t> n_values = {10, 100, 1000};
  std::size_t replicates = 100000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// Adds a "table" estimator (three thresholds only).
  std::optional<MleTable> table;
  PowerStableOptions dist{};
};

struct MseRow {
  std::size_t n;
  std::string estimator;
  std::size_t replicates;
  std::size_t failures;
  double mean;
  double bias;
  double mse;
  double scaled_mse;     // n * mse / lambda^2
  double theoretical_V;  // V at the true etas
  double theoretical_mse;
};

/// Per-replicate estimates of one estimator; NaN marks a failed replicate.
struct MseSamples {
  std::size_t n;
  std::vector<double> mle, corrected, table;
};

/// Stream ids: replicate r at the i-th sample size uses (i << 40) | r.
inline std::vector<MseSamples> simulate_mse_samples(const SimulateMseConfig& cfg) {
  if (!(cfg.lambda > 0.0)) throw usage_error("lambda must be positive");
  if (cfg.replicates == 0) throw usage_error("replicates must be positive");
  const EtaVector etas(cfg.etas);
  if (!etas.strictly_decreasing()) throw usage_error("etas must be strictly decreasing");
  const ThresholdScheme scheme(etas.thresholds(cfg.lambda), cfg.alpha_est);
  if (cfg.table && scheme.m() != 3) throw usage_error("table estimator needs three thresholds");
  const PowerStableDist dist{cfg.alpha_est, cfg.dist};
  EstimatorOptions opt;
  opt.compute_variance = false;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<MseSamples> out;
  for (std::size_t ni = 0; ni < cfg.n_values.size(); ++ni) {
    const std::size_t n = cfg.n_values[ni];
    if (n == 0) throw usage_error("sample sizes must be positive");
    MseSamples s{n, std::vector<double>(cfg.replicates, nan), std::vector<double>(cfg.replicates, nan), {}};
    if (cfg.table) s.table.assign(cfg.replicates, nan);
    parallel_for(cfg.replicates, cfg.threads, [&](std::size_t r) {
      RngStream rng(cfg.seed, (std::uint64_t{ni} << 40) | r);
      BinCounts counts = BinCounts::zeros(scheme.m() + 1);
      for (std::size_t j = 0; j < n; ++j) ++counts.counts[scheme.bin_of(cfg.lambda * sample_power_stable(cfg.alpha_gen, rng))];
      try {
        const EstimateReport rep = estimate(counts, scheme, dist, opt);
        s.mle[r] = rep.estimate;
        s.corrected[r] = rep.corrected;
      } catch (const estimation_error&) {
      }
      if (cfg.table) {
        try {
          s.table[r] = lookup(*cfg.table, counts, scheme[0]);
        } catch (const estimation_error&) {
        }
      }
    });
    out.push_back(std::move(s));
  }
  return out;
}

inline MseRow summarize_mse(std::size_t n, const std::string& name, const std::vector<double>& v, double lambda,
                            double V) {
  MseRow row{n, name, v.size(), 0, 0.0, 0.0, 0.0, 0.0, V, lambda * lambda * V / static_cast<double>(n)};
  double sum = 0.0, sq = 0.0;
  std::size_t ok = 0;
  for (double e : v) {
    if (std::isnan(e)) {
      ++row.failures;
      continue;
    }
    ++ok;
    sum += e;
    sq += (e - lambda) * (e - lambda);
  }
  row.mean = ok ? sum / static_cast<double>(ok) : std::numeric_limits<double>::quiet_NaN();
  row.bias = row.mean - lambda;
  row.mse = ok ? sq / static_cast<double>(ok) : std::numeric_limits<double>::quiet_NaN();
  row.scaled_mse = static_cast<double>(n) * row.mse / (lambda * lambda);
  return row;
}

inline std::vector<MseRow> simulate_mse(const SimulateMseConfig& cfg) {
  const double V = variance_coefficient(PowerStableDist{cfg.alpha_est, cfg.dist}, cfg.etas);
  std::vector<MseRow> rows;
  for (const auto& s : simulate_mse_samples(cfg)) {
    rows.push_back(summarize_mse(s.n, "mle", s.mle, cfg.lambda, V));
    rows.push_back(summarize_mse(s.n, "corrected", s.corrected, cfg.lambda, V));
    if (cfg.table) rows.push_back(summarize_mse(s.n, "table", s.table, cfg.lambda, V));
  }
  return rows;
}

inline void write_mse_csv(std::ostream& os, const std::vector<MseRow>& rows) {
  os << "n,estimator,replicates,failures,mean,bias,mse,n_mse_over_lambda2,theoretical_V,theoretical_mse\n";
  for (const auto& r : rows) {
    os << r.n << ',' << r.estimator << ',' << r.replicates << ',' << r.failures << ',' << format_double(r.mean)
       << ',' << format_double(r.bias) << ',' << format_double(r.mse) << ',' << format_double(r.scaled_mse) << ','
       << format_double(r.theoretical_V) << ',' << format_double(r.theoretical_mse) << '\n';
  }
}

// ---------------------------------------------------------------- optimize

inline void write_optimum_csv(std::ostream& os, Alpha alpha, const ThresholdOptimum& opt) {
  os << "alpha,m,V,converged";
  for (std::size_t k = 1; k <= opt.etas.size(); ++k) os << ",eta_" << k;
  os << '\n' << alpha.to_string() << ',' << opt.etas.size() << ',' << format_double(opt.variance) << ','
     << (opt.converged ? 1 : 0);
  for (double e : opt.etas.values()) os << ',' << format_double(e);
  os << '\n';
}

// ---------------------------------------------------------------- tails

struct TailBoundsConfig {
  Alpha alpha = Alpha::zero_plus();
  std::vector<double> etas = make_grid(1.0, 2.0, 11, false);
  std::vector<double> epsilons = make_grid(0.0, 1.0, 21, false);
  PowerStableOptions dist{};
};

struct TailRow {
  double eta;
  TailConstants tc;
};

inline std::vector<TailRow> tail_bounds(const TailBoundsConfig& cfg) {
  const PowerStableDist dist{cfg.alpha, cfg.dist};
  std::vector<TailRow> rows;
  for (double e : cfg.etas) {
    for (double eps : cfg.epsilons) rows.push_back({e, tail_constants(dist, e, eps)});
  }
  return rows;
}

inline void write_tail_csv(std::ostream& os, const std::vector<TailRow>& rows) {
  os << "eta,epsilon,G_R,G_L,exponent_R,exponent_L\n";
  for (const auto& r : rows) {
    os << format_double(r.eta) << ',' << format_double(r.tc.epsilon) << ',' << format_double(r.tc.g_right) << ','
       << format_optional(r.tc.g_left) << ',' << format_double(r.tc.exponent_right) << ','
       << format_optional(r.tc.exponent_left) << '\n';
  }
}

// ---------------------------------------------------------------- CS

struct CsConfig {
  std::size_t N = 1000;
  std::size_t K = 20;
  double sigma = 5.0;
  double alpha = 0.05;
  std::size_t trials = 1000;
  std::vector<double> zetas = {1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 5.0, 6.0};
  std::vector<std::size_t> n_values = {20, 50, 100};
  std::vector<double> etas = {0.2, 0.5, 1.5, 2.0, 3.0};
  int scheme_bits = 1;
  bool include_full_info = true;
  std::vector<double> quantiles = {0.5, 0.75, 0.95};
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Measurements used for recovery: M = ceil(zeta K log(N / 0.01)).
inline std::size_t measurements_for(double zeta, std::size_t K, std::size_t N) {
  return static_cast<std::size_t>(std::ceil(zeta * static_cast<double>(K) * std::log(static_cast<double>(N) / 0.01)));
}

struct CsCurve {
  std::string estimator;  // "true", "quantized" or "full"
  std::optional<std::size_t> n;
  std::optional<double> eta;
  /// errors[z][trial]
  std::vector<std::vector<double>> errors;
  std::size_t conflicts = 0;
};

struct CsResult {
  std::vector<double> zetas;
  std::vector<std::size_t> M;
  std::vector<CsCurve> curves;
};

/// K-sparse signal with uniformly placed support and N(0, sigma^2) values.
inline SparseSignal random_sparse_signal(std::size_t N, std::size_t K, double sigma, RngStream& rng) {
  if (K > N) throw usage_error("K must not exceed N");
  std::vector<std::size_t> idx(N);
  for (std::size_t i = 0; i < N; ++i) idx[i] = i;
  std::vector<std::pair<std::size_t, double>> support;
  for (std::size_t k = 0; k < K; ++k) {
    const auto pick = k + static_cast<std::size_t>(rng.uniform01() * static_cast<double>(N - k));
    std::swap(idx[k], idx[std::min(pick, N - 1)]);
    // Box-Muller; the cosine branch only.
    const double g = std::sqrt(-2.0 * std::log(rng.uniform01())) * std::cos(2.0 * std::numbers::pi * rng.uniform01());
    support.emplace_back(idx[k], sigma * g);
  }
  return SparseSignal(N, std::move(support));
}

/// Every trial draws a fresh signal, design and auxiliary sample. All K
/// estimates of a trial share them, so curves differ only through K.
inline CsResult cs_experiment(const CsConfig& cfg) {
  if (cfg.zetas.empty()) throw usage_error("need at least one zeta");
  if (cfg.trials == 0) throw usage_error("trials must be positive");
  CsResult res;
  res.zetas = cfg.zetas;
  std::sort(res.zetas.begin(), res.zetas.end());
  for (double z : res.zetas) {
    if (!(z > 0.0)) throw usage_error("zeta must be positive");
    const std::size_t M = measurements_for(z, cfg.K, cfg.N);
    if (!res.M.empty() && M <= res.M.back()) throw usage_error("zeta values give coinciding M");
    res.M.push_back(M);
  }
  res.curves.push_back({"true", std::nullopt, std::nullopt, {}, 0});
  for (std::size_t n : cfg.n_values) {
    for (double e : cfg.etas) res.curves.push_back({"quantized", n, e, {}, 0});
  }
  if (cfg.include_full_info) {
    for (std::size_t n : cfg.n_values) res.curves.push_back({"full", n, std::nullopt, {}, 0});
  }
  for (auto& c : res.curves) c.errors.assign(res.M.size(), std::vector<double>(cfg.trials));
  const std::size_t n_max = cfg.n_values.empty() ? 0 : *std::max_element(cfg.n_values.begin(), cfg.n_values.end());
  std::vector<std::vector<std::size_t>> conflicts(cfg.trials, std::vector<std::size_t>(res.curves.size()));

  parallel_for(cfg.trials, cfg.threads, [&](std::size_t t) {
    RngStream sig_rng(cfg.seed, t);
    const SparseSignal x = random_sparse_signal(cfg.N, cfg.K, cfg.sigma, sig_rng);
    const std::uint64_t design_seed = keyed_bits(cfg.seed, 0x5452494c /* "TRIL" */, static_cast<std::uint32_t>(t), 0)[0];
    const DesignMatrixSeeded design(cfg.N, res.M.back(), cfg.alpha, design_seed);
    const MeasurementSet meas = measure(x, design);

    RngStream aux_rng(cfg.seed, (std::uint64_t{1} << 40) | t);
    const auto y = auxiliary_measurements(x, cfg.alpha, n_max, aux_rng);
    const double lambda_true = x.lambda(cfg.alpha);
    std::vector<double> k_hats;
    for (const auto& c : res.curves) {
      if (c.estimator == "true") {
        k_hats.push_back(static_cast<double>(cfg.K));
      } else {
        const std::span<const double> prefix(y.data(), *c.n);
        k_hats.push_back(c.estimator == "quantized"
                             ? estimate_K_from_measurements(prefix, lambda_true, cfg.alpha, *c.eta, cfg.scheme_bits)
                             : full_info_harmonic_mean(prefix, cfg.alpha));
      }
    }
    const auto rec = recover_signs_batch(meas.signs, design, k_hats, res.M, 1);
    for (std::size_t c = 0; c < res.curves.size(); ++c) {
      for (std::size_t z = 0; z < res.M.size(); ++z) {
        res.curves[c].errors[z][t] = recovery_error(rec[c][z].signs, x);
        conflicts[t][c] += rec[c][z].conflicts;
      }
    }
  });
  for (std::size_t c = 0; c < res.curves.size(); ++c) {
    for (std::size_t t = 0; t < cfg.trials; ++t) res.curves[c].conflicts += conflicts[t][c];
  }
  return res;
}

inline void write_cs_csv(std::ostream& os, const CsResult& res, const std::vector<double>& quantiles,
                         bool per_trial) {
  os << "trial,zeta,n,eta,estimator,quantile,error\n";
  auto key = [&](const CsCurve& c, std::size_t z) {
    return format_double(res.zetas[z]) + ',' + (c.n ? std::to_string(*c.n) : std::string()) + ',' +
           format_optional(c.eta) + ',' + c.estimator;
  };
  for (const auto& c : res.curves) {
    for (std::size_t z = 0; z < res.zetas.size(); ++z) {
      if (per_trial) {
        for (std::size_t t = 0; t < c.errors[z].size(); ++t) {
          os << t << ',' << key(c, z) << ",," << format_double(c.errors[z][t]) << '\n';
        }
      }
      for (double q : quantiles) {
        os << ',' << key(c, z) << ',' << format_double(q) << ',' << format_double(quantile(c.errors[z], q)) << '\n';
      }
    }
  }
}

}  // namespace qstable
