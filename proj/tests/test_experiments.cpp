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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "test_support.hpp"

namespace qstable {
namespace {

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

TEST(Format, SeventeenDigitsRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1.544138, 2.0e-300}) EXPECT_EQ(std::stod(format_double(v)), v);
  EXPECT_EQ(format_optional(std::nullopt), "");
}

TEST(Grid, EndpointsAndSpacing) {
  const auto g = make_grid(0.1, 10.0, 3, true);
  ASSERT_EQ(g.size(), 3u);
  EXPECT_DOUBLE_EQ(g[0], 0.1);
  EXPECT_NEAR(g[1], 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(g[2], 10.0);
  EXPECT_THROW(make_grid(0.0, 1.0, 5, true), usage_error);
}

TEST(VarianceCurve, ZeroPlusOneBitMinimum) {
  VarianceCurveConfig cfg;
  cfg.alpha = Alpha::zero_plus();
  cfg.m = 1;
  cfg.eta_min = 1.0;
  cfg.eta_max = 2.5;
  cfg.points = 1501;
  cfg.log_grid = false;
  const auto rows = variance_curve(cfg);
  EXPECT_EQ(rows.size(), cfg.points);
  const auto best = std::min_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.V < b.V; });
  EXPECT_NEAR(best->etas[0], 1.594, 0.01);
  EXPECT_NEAR(best->V, 1.544, 0.002);
  std::ostringstream os;
  write_variance_csv(os, rows, 1);
  EXPECT_EQ(count_lines(os.str()), rows.size() + 1);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "strategy,t,eta_1,V");
}

TEST(VarianceCurve, TwoBitLadderBeatsOneBitOverWideWindow) {
  VarianceCurveConfig cfg;
  cfg.alpha = Alpha::zero_plus();
  cfg.m = 3;
  cfg.strategy = "ladder";
  cfg.ratios = {3.0};
  cfg.eta_min = 0.05;
  cfg.eta_max = 5.0;
  cfg.points = 200;
  const auto rows = variance_curve(cfg);
  EXPECT_EQ(rows.size(), 200u);
  double lo = 1e9, hi = 0.0;
  for (const auto& r : rows) {
    EXPECT_EQ(r.etas.size(), 3u);
    if (r.V < 1.544) {
      lo = std::min(lo, r.etas[2]);
      hi = std::max(hi, r.etas[2]);
    }
  }
  // Below the 1-bit optimum across at least a factor-3 range of eta_3.
  EXPECT_GT(hi / lo, 3.0);
}

TEST(VarianceCurve, SweepStaysInsideEndpoints) {
  VarianceCurveConfig cfg;
  cfg.alpha = Alpha(1.0);
  cfg.m = 3;
  cfg.strategy = "sweep";
  cfg.eta1 = 4.0;
  cfg.eta3_values = {0.5, 1.0};
  cfg.points = 25;
  const auto rows = variance_curve(cfg);
  EXPECT_EQ(rows.size(), 50u);
  for (const auto& r : rows) {
    EXPECT_EQ(r.etas[0], 4.0);
    EXPECT_GT(r.etas[1], r.etas[2]);
    EXPECT_LT(r.etas[1], r.etas[0]);
  }
}

TEST(TailBounds, ZeroEpsilonRows) {
  TailBoundsConfig cfg;
  cfg.etas = {1.0};
  cfg.epsilons = {0.0, 0.5, 1.5};
  const auto rows = tail_bounds(cfg);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0].tc.exponent_right, 0.0);
  EXPECT_EQ(rows[0].tc.exponent_left, 0.0);
  std::ostringstream os;
  write_tail_csv(os, rows);
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "eta,epsilon,G_R,G_L,exponent_R,exponent_L");
  // The epsilon = 1.5 row has no left constant: G_L and exponent_L are empty.
  const std::string last = s.substr(s.rfind('\n', s.size() - 2) + 1);
  EXPECT_EQ(last.rfind("1,1.5,", 0), 0u) << last;
  EXPECT_NE(last.find(",,"), std::string::npos) << last;
  EXPECT_EQ(last.back(), '\n');
  EXPECT_EQ(last[last.size() - 2], ',') << last;
}

std::string mse_csv(unsigned threads) {
  SimulateMseConfig cfg;
  cfg.alpha_gen = Alpha(0.05);
  cfg.alpha_est = Alpha::zero_plus();
  cfg.etas = {1.594};
  cfg.n_values = {10, 100};
  cfg.replicates = 3000;
  cfg.seed = 2024;
  cfg.threads = threads;
  std::ostringstream os;
  write_mse_csv(os, simulate_mse(cfg));
  return os.str();
}

TEST(SimulateMse, DeterministicCsvAcrossThreads) {
  const std::string a = mse_csv(1);
  EXPECT_EQ(a, mse_csv(1));
  EXPECT_EQ(a, mse_csv(3));
  EXPECT_EQ(count_lines(a), 5u);
}

TEST(SimulateMse, SmallAlphaGeneratorMatchesZeroPlusVariance) {
  SimulateMseConfig cfg;
  cfg.alpha_gen = Alpha(0.05);
  cfg.alpha_est = Alpha::zero_plus();
  cfg.etas = {1.594};
  cfg.n_values = {1000};
  cfg.replicates = 20000;
  cfg.seed = 7;
  const auto rows = simulate_mse(cfg);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].estimator, "mle");
  // Under the alpha = 0.05 law the 0+ estimator converges to lam rather than
  // 1, so n MSE = lam^2 V + n (lam - 1)^2 asymptotically.
  const double p = PowerStableDist{Alpha(0.05)}.cdf(1.594);
  const double lam = 1.594 * -std::log(p);
  const double predicted = lam * lam * 1.544 + 1000.0 * (lam - 1.0) * (lam - 1.0);
  EXPECT_NEAR(lam, 0.972, 1e-3);
  EXPECT_NEAR(rows[0].scaled_mse / predicted, 1.0, 0.1);
  EXPECT_EQ(rows[0].failures, 0u);
}

TEST(SimulateMse, TableEstimatorRow) {
  SimulateMseConfig cfg;
  cfg.alpha_gen = Alpha(1.0);
  cfg.alpha_est = Alpha(1.0);
  cfg.etas = {4.5, 1.5, 0.5};
  cfg.n_values = {100};
  cfg.replicates = 500;
  cfg.table = build_table(ThresholdScheme(EtaVector(cfg.etas).thresholds(1.0), Alpha(1.0)), 50);
  const auto rows = simulate_mse(cfg);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[2].estimator, "table");
  EXPECT_NEAR(rows[2].scaled_mse / rows[0].scaled_mse, 1.0, 0.3);
}

TEST(CsExperiment, DeterministicAndShaped) {
  CsConfig cfg;
  cfg.N = 200;
  cfg.K = 5;
  cfg.trials = 6;
  cfg.zetas = {1.0, 3.0};
  cfg.n_values = {50};
  cfg.etas = {1.5};
  cfg.seed = 3;
  const auto a = cs_experiment(cfg);
  cfg.threads = 2;
  const auto b = cs_experiment(cfg);
  std::ostringstream sa, sb;
  write_cs_csv(sa, a, {0.5, 0.75}, true);
  write_cs_csv(sb, b, {0.5, 0.75}, true);
  EXPECT_EQ(sa.str(), sb.str());
  // curves: true, quantized, full; rows: per trial plus per quantile.
  ASSERT_EQ(a.curves.size(), 3u);
  EXPECT_EQ(count_lines(sa.str()), 1 + 3 * 2 * (6 + 2));
  EXPECT_EQ(sa.str().substr(0, sa.str().find('\n')), "trial,zeta,n,eta,estimator,quantile,error");
  EXPECT_EQ(a.M[0], measurements_for(1.0, 5, 200));
  for (const auto& c : a.curves) EXPECT_EQ(c.conflicts, 0u);
}

}  // namespace
}  // namespace qstable
