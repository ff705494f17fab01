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

#include <cmath>
#include <numbers>
#include <vector>

#include "test_support.hpp"

namespace qstable {
namespace {

const PowerStableDist kZeroPlus{Alpha::zero_plus()};
const PowerStableDist kCauchy{Alpha(1.0)};
const PowerStableDist kGauss{Alpha(2.0)};

double V(const PowerStableDist& d, std::vector<double> etas) { return variance_coefficient(d, etas); }

TEST(Variance, Anchors) {
  EXPECT_NEAR(V(kZeroPlus, {1.594}), 1.544, 5e-4);
  EXPECT_NEAR(V(kCauchy, {1.0}), std::numbers::pi * std::numbers::pi / 4.0, 1e-12);
  EXPECT_NEAR(V(kZeroPlus, {1.0}), std::numbers::e - 1.0, 1e-14);
  EXPECT_NEAR(V(kGauss, {0.228}), 3.066, 1e-3);
  EXPECT_NEAR(V(kZeroPlus, {3.365, 1.771, 0.754}), 1.122, 1e-3);
}

TEST(Variance, ZeroPlusClosedFormsMatchGeneralSum) {
  for (const std::vector<double>& etas :
       std::vector<std::vector<double>>{{0.3}, {1.594}, {4.0}, {3.365, 1.771, 0.754}, {9.0, 2.0, 0.1}}) {
    std::vector<double> z;
    for (double e : etas) z.push_back(1.0 / e);
    const double general = 1.0 / detail::information(threshold_terms(kZeroPlus, z));
    EXPECT_NEAR(V(kZeroPlus, etas), general, 1e-12 * general);
  }
}

TEST(Variance, Errors) {
  EXPECT_THROW(V(kZeroPlus, {}), domain_error);
  EXPECT_THROW(V(kZeroPlus, {2.0, 2.0, 1.0}), domain_error);
  EXPECT_THROW(V(kCauchy, {1.0, -1.0}), domain_error);
  EXPECT_THROW(EtaVector({1.0, 2.0}), domain_error);
}

TEST(Variance, FullInformationFloor) {
  EXPECT_EQ(full_information_variance(Alpha::zero_plus()), 1.0);
  EXPECT_EQ(full_information_variance(Alpha(1.0)), 2.0);
  EXPECT_EQ(full_information_variance(Alpha(2.0)), 2.0);
  EXPECT_FALSE(full_information_variance(Alpha(0.7)).has_value());
}

// Expected multinomial log-likelihood per sample at lambda when the truth is 1.
double expected_loglik(const PowerStableDist& d, const std::vector<double>& z, const std::vector<double>& p0,
                       double lambda) {
  std::vector<double> zl;
  for (double v : z) zl.push_back(v / lambda);
  const auto p = bin_probabilities(d, zl);
  double s = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) s += p0[k] * std::log(p[k]);
  return s;
}

TEST(Variance, AgreesWithNumericalFisherInformation) {
  PowerStableOptions precise;
  precise.tolerance = 1e-13;
  RngStream rng(77, 0);
  for (double a : {0.0, 0.3, 0.6, 0.9, 1.0, 1.3, 1.7, 2.0}) {
    const PowerStableDist d{a == 0.0 ? Alpha::zero_plus() : Alpha(a), precise};
    for (std::size_t m : {1u, 3u}) {
      std::vector<double> etas(m);
      double e = 0.3 + 2.5 * rng.uniform01();
      for (std::size_t k = m; k-- > 0;) {
        etas[k] = e;
        e *= 1.5 + 2.0 * rng.uniform01();
      }
      std::vector<double> z;
      for (double v : etas) z.push_back(1.0 / v);
      const auto p0 = bin_probabilities(d, z);
      auto second = [&](double h) {
        return (expected_loglik(d, z, p0, 1.0 + h) - 2.0 * expected_loglik(d, z, p0, 1.0) +
                expected_loglik(d, z, p0, 1.0 - h)) /
               (h * h);
      };
      const double curvature = (4.0 * second(0.01) - second(0.02)) / 3.0;
      const double v = variance_coefficient(d, etas);
      EXPECT_NEAR(-1.0 / curvature / v, 1.0, 1e-4) << "alpha " << a << " m " << m;
    }
  }
}

struct Anchor {
  double alpha;
  std::size_t m;
  std::vector<double> etas;
  double V;
};

Alpha make_alpha(double a) { return a == 0.0 ? Alpha::zero_plus() : Alpha(a); }

TEST(Optimizer, ReproducesPublishedOptima) {
  const std::vector<Anchor> anchors = {
      {0.0, 1, {1.594}, 1.544},
      {1.0, 1, {1.000}, 2.4674},
      {2.0, 1, {0.228}, 3.066},
      {0.0, 3, {3.365, 1.771, 0.754}, 1.122},
      {1.0, 3, {1.927, 1.000, 0.519}, 2.087},
      {2.0, 3, {0.546, 0.195, 0.093}, 2.236},
      {1.0, 5, {2.602, 1.498, 1.001, 0.668, 0.385}, 2.036},
  };
  for (const auto& an : anchors) {
    const auto opt = optimize_thresholds(make_alpha(an.alpha), an.m);
    EXPECT_TRUE(opt.converged);
    EXPECT_NEAR(opt.variance, an.V, 2e-3) << an.alpha << " " << an.m;
    ASSERT_EQ(opt.etas.size(), an.m);
    for (std::size_t k = 0; k < an.m; ++k) EXPECT_NEAR(opt.etas[k], an.etas[k], 1e-2) << an.alpha << " " << k;
  }
}

TEST(Optimizer, StationaryAndNested) {
  for (double a : {0.0, 1.0, 2.0}) {
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t m : {1u, 3u, 5u}) {
      const PowerStableDist d{make_alpha(a)};
      const auto opt = optimize_thresholds(make_alpha(a), m);
      for (std::size_t k = 0; k < m; ++k) {
        for (double s : {-1e-2, 1e-2}) {
          std::vector<double> e(opt.etas.values().begin(), opt.etas.values().end());
          e[k] *= 1.0 + s;
          EXPECT_GT(variance_coefficient(d, e), opt.variance) << a << " m " << m << " k " << k;
        }
      }
      EXPECT_LE(opt.variance, prev);
      EXPECT_GE(opt.variance, *full_information_variance(make_alpha(a)));
      prev = opt.variance;
    }
  }
}

TEST(Optimizer, DeterministicAcrossThreadCounts) {
  OptimizerOptions one, three;
  three.threads = 3;
  const auto a = optimize_thresholds(Alpha(2.0), 5, one);
  const auto b = optimize_thresholds(Alpha(2.0), 5, three);
  EXPECT_EQ(a.variance, b.variance);
  EXPECT_EQ(a.start_index, b.start_index);
  for (std::size_t k = 0; k < 5; ++k) EXPECT_EQ(a.etas[k], b.etas[k]);
  EXPECT_THROW(optimize_thresholds(Alpha(1.0), 2), usage_error);
}

TEST(Tails, ZeroEpsilonGivesZeroExponent) {
  const auto tc = tail_constants(kZeroPlus, 1.0, 0.0);
  EXPECT_EQ(tc.exponent_right, 0.0);
  EXPECT_EQ(tc.exponent_left, 0.0);
  EXPECT_NEAR(tc.g_right, 2.0 * (std::numbers::e - 1.0), 1e-12);
  EXPECT_THROW(tail_constants(kZeroPlus, 1.0, -0.1), domain_error);
}

TEST(Tails, SmallEpsilonApproachesTwiceVariance) {
  for (const PowerStableDist* d : {&kZeroPlus, &kCauchy, &kGauss}) {
    const double eta = d == &kGauss ? 0.3 : 1.2;
    const auto tc = tail_constants(*d, eta, 1e-4);
    const double v = variance_coefficient(*d, std::vector<double>{eta});
    EXPECT_NEAR(tc.g_right / (2.0 * v), 1.0, 1e-3);
    EXPECT_NEAR(*tc.g_left / (2.0 * v), 1.0, 1e-3);
  }
}

TEST(Tails, RightConstantExceedsLeftForZeroPlus) {
  for (int i = 0; i <= 10; ++i) {
    const double eta = 1.0 + 0.1 * i;
    for (int j = 1; j <= 20; ++j) {
      const double eps = 0.05 * j;
      const auto tc = tail_constants(kZeroPlus, eta, eps);
      ASSERT_TRUE(tc.g_left.has_value());
      EXPECT_GT(tc.g_right, *tc.g_left) << eta << " " << eps;
    }
  }
}

TEST(Tails, LeftConstantRange) {
  const auto at_one = tail_constants(kZeroPlus, 1.5, 1.0);
  ASSERT_TRUE(at_one.exponent_left.has_value());
  EXPECT_NEAR(*at_one.exponent_left, 1.5, 1e-14);  // -log F(1/eta) = eta
  EXPECT_FALSE(tail_constants(kZeroPlus, 1.5, 1.5).g_left.has_value());
}

TEST(Tails, ChernoffBoundHoldsInSimulation) {
  const double eta = 1.5, n = 100;
  const ThresholdScheme s({1.0 / eta}, Alpha::zero_plus());
  const std::size_t reps = 20000;
  std::vector<double> est;
  for (std::size_t r = 0; r < reps; ++r) {
    RngStream rng(88, r);
    est.push_back(mle_1bit(testing::draw_counts(Alpha::zero_plus(), 1.0, s, 100, rng), s[0], kZeroPlus).estimate);
  }
  for (double eps : {0.1, 0.3, 0.5}) {
    const auto tc = tail_constants(kZeroPlus, eta, eps);
    std::size_t right = 0, left = 0;
    for (double e : est) {
      right += e >= 1.0 + eps;
      left += e <= 1.0 - eps;
    }
    const double br = std::exp(-n * tc.exponent_right), bl = std::exp(-n * *tc.exponent_left);
    EXPECT_LE(right / double(reps), br + 3.0 * std::sqrt(br * (1.0 - br) / reps)) << eps;
    EXPECT_LE(left / double(reps), bl + 3.0 * std::sqrt(bl * (1.0 - bl) / reps)) << eps;
  }
}

TEST(SampleComplexity, Relations) {
  for (double eps : {0.05, 0.2, 0.5, 1.0}) {
    for (double delta : {0.01, 0.05, 0.2}) {
      const auto exact = sample_complexity(Alpha::zero_plus(), 1.594, eps, delta, true);
      const auto bound = sample_complexity(Alpha::zero_plus(), 1.594, eps, delta, false);
      EXPECT_LE(exact, bound);
      const auto tc = tail_constants(kZeroPlus, 1.594, eps);
      EXPECT_NEAR(chernoff_sample_bound(tc, delta / 2.0) / chernoff_sample_bound(tc, delta),
                  std::log(4.0 / delta) / std::log(2.0 / delta), 1e-14);
      EXPECT_EQ(bound, static_cast<std::uint64_t>(std::ceil(chernoff_sample_bound(tc, delta))));
    }
  }
  EXPECT_THROW(sample_complexity(Alpha::zero_plus(), 1.0, 0.0, 0.1, false), domain_error);
  EXPECT_THROW(sample_complexity(Alpha::zero_plus(), 1.0, 1.5, 0.1, false), domain_error);
  EXPECT_THROW(sample_complexity(Alpha::zero_plus(), 1.0, 0.5, 1.0, false), domain_error);
}

TEST(SampleComplexity, ReturnedSizeMeetsFailureRate) {
  const double eta = 1.594, eps = 0.2, delta = 0.05;
  const ThresholdScheme s({1.0 / eta}, Alpha::zero_plus());
  for (bool exact : {true, false}) {
    const auto n = sample_complexity(Alpha::zero_plus(), eta, eps, delta, exact);
    std::size_t fail = 0;
    const std::size_t reps = 10000;
    for (std::size_t r = 0; r < reps; ++r) {
      RngStream rng(91, r);
      const double e = mle_1bit(testing::draw_counts(Alpha::zero_plus(), 1.0, s, n, rng), s[0], kZeroPlus).estimate;
      fail += std::abs(e - 1.0) >= eps;
    }
    EXPECT_LE(fail / double(reps), delta) << "n " << n;
  }
}

TEST(BiasCoefficient, TwoFormsAgree) {
  PowerStableOptions precise;
  precise.tolerance = 1e-12;
  for (double eta : {0.5, 1.0, 1.594, 3.0}) {
    EXPECT_NEAR(bias_coefficient_1bit(kZeroPlus, eta), bias_coefficient_from_frequency(kZeroPlus, std::exp(-eta)),
                1e-10);
    const double pc = kCauchy.cdf(1.0 / eta);
    EXPECT_NEAR(bias_coefficient_1bit(kCauchy, eta), bias_coefficient_from_frequency(kCauchy, pc), 1e-10);
  }
  for (double eta : {0.1, 0.228, 0.6}) {
    const double pg = kGauss.cdf(1.0 / eta);
    EXPECT_NEAR(bias_coefficient_1bit(kGauss, eta), bias_coefficient_from_frequency(kGauss, pg), 1e-10);
  }
  EXPECT_NEAR(bias_coefficient_from_frequency(kCauchy, 0.5), std::numbers::pi * std::numbers::pi / 8.0, 1e-14);
  EXPECT_NEAR(bias_coefficient_1bit(kCauchy, 1.0), std::numbers::pi * std::numbers::pi / 8.0, 1e-14);
}

// E[Lambda_hat] under Binomial(n, p) counts, summed exactly over the pmf.
double exact_mean_estimate(const PowerStableDist& d, double eta, std::uint64_t n) {
  const double p = d.cdf(1.0 / eta);
  const double C = 1.0 / eta;
  EstimatorOptions opt;
  opt.compute_variance = false;
  double s = 0.0;
  for (std::uint64_t k = 0; k <= n; ++k) {
    const double lp = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
                      (n - k) * std::log1p(-p);
    if (lp < -80.0) continue;
    s += std::exp(lp) * mle_1bit(BinCounts({k, n - k}), C, d, opt).estimate;
  }
  return s;
}

TEST(BiasCoefficient, MatchesExactBinomialExpectation) {
  const std::uint64_t n = 10000;
  for (const PowerStableDist* d : {&kZeroPlus, &kCauchy}) {
    const double eta = d == &kZeroPlus ? 1.594 : 1.0;
    const double b = (exact_mean_estimate(*d, eta, n) - 1.0) * n;
    EXPECT_NEAR(b / bias_coefficient_1bit(*d, eta), 1.0, 0.2) << d->alpha().to_string();
  }
}

}  // namespace
}  // namespace qstable
