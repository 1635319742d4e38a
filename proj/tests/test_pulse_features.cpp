#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <random>
#include <vector>

#include "apsense/pulse_features.hpp"

using namespace apsense;

namespace {

constexpr double kPi = std::numbers::pi;

// Triangle train: troughs at multiples of `period` (value 0), apex of height
// `h` at +rise.
std::vector<double> triangle_train(std::size_t pulses, std::size_t rise, std::size_t fall, double h) {
  const std::size_t period = rise + fall;
  std::vector<double> x(pulses * period + 1, 0.0);
  for (std::size_t p = 0; p < pulses; ++p) {
    for (std::size_t i = 0; i <= rise; ++i) x[p * period + i] = h * static_cast<double>(i) / static_cast<double>(rise);
    for (std::size_t i = 1; i <= fall; ++i)
      x[p * period + rise + i] = h * (1.0 - static_cast<double>(i) / static_cast<double>(fall));
  }
  return x;
}

PulseLandmarks regular_landmarks(std::size_t pulses, std::size_t period, std::size_t rise, std::size_t offset = 0) {
  PulseLandmarks lm;
  for (std::size_t p = 0; p <= pulses; ++p) lm.bottoms.push_back(offset + p * period);
  for (std::size_t p = 0; p < pulses; ++p) lm.tops.push_back(offset + p * period + rise);
  return lm;
}

double two_gaussian(double u) {
  const double s = (u - 0.2) / 0.07, d = (u - 0.4) / 0.15;
  return std::exp(-0.5 * s * s) + 0.5 * std::exp(-0.5 * d * d);
}

// Scipy-style resampling through the full complex spectrum.
std::vector<double> resample_oracle(const std::vector<double>& x, std::size_t num) {
  using cd = std::complex<double>;
  const std::size_t nx = x.size();
  std::vector<cd> X(nx), Y(num);
  for (std::size_t k = 0; k < nx; ++k)
    for (std::size_t i = 0; i < nx; ++i)
      X[k] += x[i] * std::polar(1.0, -2.0 * kPi * static_cast<double>((k * i) % nx) / static_cast<double>(nx));
  const std::size_t n = std::min(num, nx);
  const std::size_t nyq = n / 2 + 1;
  for (std::size_t k = 0; k < nyq; ++k) Y[k] = X[k];
  if (n > 2)
    for (std::size_t j = 1; j <= n - nyq; ++j) Y[num - j] = X[nx - j];
  if (n % 2 == 0) {
    if (num < nx) {
      Y[n / 2] += X[nx - n / 2];
    } else if (nx < num) {
      Y[n / 2] *= 0.5;
      Y[num - n / 2] = Y[n / 2];
    }
  }
  std::vector<double> y(num);
  for (std::size_t m = 0; m < num; ++m) {
    cd acc{};
    for (std::size_t k = 0; k < num; ++k)
      acc += Y[k] * std::polar(1.0, 2.0 * kPi * static_cast<double>((k * m) % num) / static_cast<double>(num));
    y[m] = acc.real() / static_cast<double>(nx);
  }
  return y;
}

std::vector<double> smooth_random(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> x(n, 0.0);
  const int comps = 1 + static_cast<int>(rng() % 4);
  for (int c = 0; c < comps; ++c) {
    const double period = 40.0 + 200.0 * u(rng), amp = 0.2 + u(rng), ph = 2 * kPi * u(rng);
    for (std::size_t i = 0; i < n; ++i) x[i] += amp * std::sin(2 * kPi * static_cast<double>(i) / period + ph);
  }
  return x;
}

}  // namespace

TEST(Delineate, SinusoidPeriod100) {
  std::vector<double> x(1000);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2 * kPi * static_cast<double>(i) / 100.0);
  const auto lm = delineate(x, 30);
  EXPECT_TRUE(is_valid(lm));
  EXPECT_GE(lm.pulse_count(), 9u);
  EXPECT_LE(lm.pulse_count(), 10u);
  for (std::size_t n = 0; n + 1 < lm.tops.size(); ++n) {
    const auto gap = lm.tops[n + 1] - lm.tops[n];
    EXPECT_GE(gap, 99u);
    EXPECT_LE(gap, 101u);
  }
}

TEST(Delineate, RampHasNoPulses) {
  std::vector<double> x(500);
  std::iota(x.begin(), x.end(), 0.0);
  EXPECT_THROW(delineate(x, 30), NoPulses);
  EXPECT_THROW(delineate(std::vector<double>(500, 1.0), 30), NoPulses);
}

TEST(Delineate, TooShortRejected) { EXPECT_THROW(delineate(std::vector<double>(60, 0.0), 30), ParameterError); }

TEST(Delineate, RecoversPlantedTwoGaussianLandmarks) {
  const std::size_t period = 200, beats = 12;
  std::vector<double> x(period * beats);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(period);
    double v = 0.0;
    for (int k = -1; k <= static_cast<int>(beats); ++k) v += two_gaussian(t - k);
    x[i] = v;
  }
  // Planted: argmax per beat, argmin between consecutive maxima.
  std::vector<std::size_t> peaks;
  for (std::size_t b = 0; b < beats; ++b)
    peaks.push_back(static_cast<std::size_t>(std::max_element(x.begin() + b * period, x.begin() + (b + 1) * period) - x.begin()));
  PulseLandmarks planted;
  for (std::size_t j = 0; j + 1 < peaks.size(); ++j) {
    planted.bottoms.push_back(static_cast<std::size_t>(
        std::min_element(x.begin() + peaks[j] + 1, x.begin() + peaks[j + 1]) - x.begin()));
    if (j > 0) planted.tops.push_back(peaks[j]);
  }
  const auto lm = delineate(x, 30);
  ASSERT_TRUE(is_valid(lm));
  // Every planted landmark is found, in order, with nothing between them.
  auto first = std::find(lm.bottoms.begin(), lm.bottoms.end(), planted.bottoms.front());
  ASSERT_NE(first, lm.bottoms.end());
  const auto off = static_cast<std::size_t>(first - lm.bottoms.begin());
  for (std::size_t j = 0; j < planted.bottoms.size(); ++j) EXPECT_EQ(lm.bottoms[off + j], planted.bottoms[j]);
  for (std::size_t j = 0; j < planted.tops.size(); ++j) EXPECT_EQ(lm.tops[off + j], planted.tops[j]);
}

TEST(Delineate, OutputAlwaysValidOnRandomSmoothSignals) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g(0.0, 0.01);
  int delineated = 0;
  for (int trial = 0; trial < 300; ++trial) {
    auto x = smooth_random(rng, 2000);
    if (trial % 2) for (double& v : x) v += g(rng);
    try {
      const auto lm = delineate(x, 1 + rng() % 40);
      EXPECT_TRUE(is_valid(lm));
      ++delineated;
    } catch (const NoPulses&) {
    }
  }
  EXPECT_GT(delineated, 250);
}

TEST(Delineate, InvariantUnderPositiveScaling) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = smooth_random(rng, 1500);
    auto y = x;
    for (double& v : y) v *= 3.25;
    EXPECT_EQ(delineate(x, 20), delineate(y, 20));
  }
}

TEST(Features, TriangleClosedForm) {
  const double fs = 50.0;
  const auto x = triangle_train(8, 25, 25, 2.0);
  const auto lm = regular_landmarks(8, 50, 25);
  const auto f = compute_features(x, fs, lm);
  ASSERT_EQ(f[Feature::pwa].size(), 8u);
  ASSERT_EQ(f[Feature::ppi].size(), 7u);
  ASSERT_EQ(f[Feature::dpwa].size(), 7u);
  ASSERT_EQ(f[Feature::dppi].size(), 6u);
  // Inclusive trough-to-trough sum: 2 * (2/25) * (0 + ... + 24) + 2 = 50.
  for (double v : f[Feature::pwa]) EXPECT_NEAR(v, 2.0, 1e-12);
  for (double v : f[Feature::spd]) EXPECT_NEAR(v, 0.5, 1e-12);
  for (double v : f[Feature::dpd]) EXPECT_NEAR(v, 0.5, 1e-12);
  for (double v : f[Feature::ppi]) EXPECT_NEAR(v, 1.0, 1e-12);
  for (double v : f[Feature::pa]) EXPECT_NEAR(v, 50.0, 1e-9);
  for (double v : f[Feature::dpwa]) EXPECT_EQ(v, 0.0);
  for (double v : f[Feature::dppi]) EXPECT_EQ(v, 0.0);
}

TEST(Features, RectangularPulseArea) {
  // Troughs at 0 and 51, unit plateau on samples 1..50.
  std::vector<double> x(51 * 4 + 1, 0.0);
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t i = 1; i <= 50; ++i) x[p * 51 + i] = 1.0;
  // Peak landmark inside the plateau.
  PulseLandmarks lm = regular_landmarks(4, 51, 25);
  const auto f = compute_features(x, 100.0, lm);
  for (double v : f[Feature::pa]) EXPECT_NEAR(v, 50.0, 1.0);
  for (double v : f[Feature::pa]) EXPECT_DOUBLE_EQ(v, 50.0);
}

TEST(Features, AsymmetricTriangle) {
  const double fs = 100.0;
  const auto x = triangle_train(6, 20, 60, 1.5);
  const auto lm = regular_landmarks(6, 80, 20);
  const auto f = compute_features(x, fs, lm);
  double pa = 0.0;
  for (std::size_t i = 0; i <= 80; ++i) pa += x[i];
  for (std::size_t n = 0; n < 6; ++n) {
    EXPECT_NEAR(f[Feature::spd][n], 0.2, 1e-12);
    EXPECT_NEAR(f[Feature::dpd][n], 0.6, 1e-12);
    EXPECT_NEAR(f[Feature::pwa][n], 1.5, 1e-12);
    EXPECT_NEAR(f[Feature::pa][n], pa, 1e-12);
  }
}

TEST(Features, NeedsThreePulses) {
  const auto x = triangle_train(3, 25, 25, 1.0);
  EXPECT_THROW(compute_features(x, 50.0, regular_landmarks(2, 50, 25)), InsufficientPulses);
  EXPECT_NO_THROW(compute_features(x, 50.0, regular_landmarks(3, 50, 25)));
  PulseLandmarks broken = regular_landmarks(3, 50, 25);
  std::swap(broken.tops[0], broken.tops[1]);
  EXPECT_THROW(compute_features(x, 50.0, broken), ParameterError);
}

TEST(Features, TimingIdentitiesAndTelescoping) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> g(0.0, 0.05);
  const double fs = 64.0;
  for (int trial = 0; trial < 200; ++trial) {
    auto x = smooth_random(rng, 3840);
    for (double& v : x) v += g(rng) * 0.1;
    PulseLandmarks lm;
    try {
      lm = delineate(x, 10);
    } catch (const NoPulses&) {
      continue;
    }
    if (lm.pulse_count() < 3) continue;
    const auto f = compute_features(x, fs, lm);
    const auto& spd = f[Feature::spd];
    const auto& dpd = f[Feature::dpd];
    const auto& ppi = f[Feature::ppi];
    const auto samples = [fs](double s) { return std::llround(s * fs); };
    for (std::size_t n = 0; n + 1 < spd.size(); ++n) {
      EXPECT_EQ(samples(spd[n + 1]) + samples(dpd[n]), samples(ppi[n]));
    }
    for (std::size_t n = 0; n < spd.size(); ++n)
      EXPECT_EQ(samples(spd[n]) + samples(dpd[n]), static_cast<long long>(lm.bottoms[n + 1] - lm.bottoms[n]));
    const auto& pwa = f[Feature::pwa];
    const double sum_dpwa = std::accumulate(f[Feature::dpwa].begin(), f[Feature::dpwa].end(), 0.0);
    const double sum_dppi = std::accumulate(f[Feature::dppi].begin(), f[Feature::dppi].end(), 0.0);
    EXPECT_NEAR(sum_dpwa, pwa.back() - pwa.front(), 1e-12);
    EXPECT_NEAR(sum_dppi, ppi.back() - ppi.front(), 1e-12);
  }
}

TEST(Features, AmplitudeScaling) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto x = smooth_random(rng, 2000);
    const double c = 0.1 + 5.0 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    auto y = x;
    for (double& v : y) v *= c;
    PulseLandmarks lm;
    try {
      lm = delineate(x, 15);
    } catch (const NoPulses&) {
      continue;
    }
    ASSERT_EQ(lm, delineate(y, 15));
    if (lm.pulse_count() < 3) continue;
    const auto fx = compute_features(x, 64.0, lm), fy = compute_features(y, 64.0, lm);
    for (Feature s : {Feature::pwa, Feature::dpwa, Feature::pa})
      for (std::size_t i = 0; i < fx[s].size(); ++i) EXPECT_NEAR(fy[s][i], c * fx[s][i], 1e-9 * (1 + std::abs(c * fx[s][i])));
    for (Feature s : {Feature::ppi, Feature::dppi, Feature::spd, Feature::dpd}) EXPECT_EQ(fy[s], fx[s]);
  }
}

TEST(Resample, IdentityAtSixty) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  std::vector<double> x(60);
  for (double& v : x) v = g(rng);
  const auto y = resample_60(x);
  for (std::size_t i = 0; i < 60; ++i) EXPECT_NEAR(y[i], x[i], 1e-9);
}

TEST(Resample, ConstantPreserved) {
  const std::vector<double> x(37, 4.2);
  for (double v : resample_60(x)) EXPECT_NEAR(v, 4.2, 1e-9);
}

TEST(Resample, RampMeanPreservedWithBoundedRinging) {
  std::vector<double> x(30);
  std::iota(x.begin(), x.end(), 0.0);
  const auto y = resample_60(x);
  EXPECT_NEAR(std::accumulate(y.begin(), y.end(), 0.0) / 60.0, 14.5, 1e-9);
  // Periodic extension jumps 29 -> 0: Gibbs overshoot stays under ~18% of the jump.
  for (double v : y) {
    EXPECT_GT(v, -0.18 * 29.0);
    EXPECT_LT(v, 29.0 + 0.18 * 29.0);
  }
  // scipy.signal.resample reference values
  EXPECT_NEAR(y[0], 0.0, 1e-9);
  EXPECT_NEAR(y[1], -3.5811366877282134, 1e-9);
  EXPECT_NEAR(y[29], 14.5, 1e-9);
  EXPECT_NEAR(y[59], 14.5, 1e-9);
}

TEST(Resample, MatchesReferenceValues) {
  std::vector<double> a(75), b(61);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::sin(0.37 * static_cast<double>(i)) + 0.1 * static_cast<double>(i);
  for (std::size_t i = 0; i < b.size(); ++i) b[i] = std::cos(0.2 * static_cast<double>(i));
  const auto ya = resample_60(a), yb = resample_60(b);
  EXPECT_NEAR(ya[0], 0.7803097114048304, 1e-9);
  EXPECT_NEAR(ya[7], 0.7899614321607263, 1e-9);
  EXPECT_NEAR(ya[30], 4.659946649065566, 1e-9);
  EXPECT_NEAR(ya[59], 8.528643146289895, 1e-9);
  EXPECT_NEAR(yb[0], 1.0, 1e-9);
  EXPECT_NEAR(yb[13], -0.8792361508158838, 1e-9);
  EXPECT_NEAR(yb[59], 0.8410793012302618, 1e-9);
}

TEST(Resample, MatchesSpectrumOracleForManyLengths) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g;
  for (std::size_t len = 2; len <= 130; ++len) {
    std::vector<double> x(len);
    for (double& v : x) v = g(rng);
    const auto got = resample_60(x);
    const auto want = resample_oracle(x, 60);
    for (std::size_t i = 0; i < 60; ++i) ASSERT_NEAR(got[i], want[i], 1e-9) << "len " << len << " i " << i;
  }
}

TEST(Resample, TooShortRejected) { EXPECT_THROW(resample_60(std::vector<double>{1.0}), ParameterError); }

TEST(Standardizer, PooledMomentsAfterFit) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(5.0, 2.0);
  std::vector<FeatureMatrix> train(25);
  for (auto& m : train)
    for (std::size_t r = 0; r < kFeatureCount; ++r)
      for (std::size_t c = 0; c < kFeatureLength; ++c) m(r, c) = g(rng) * static_cast<double>(r + 1);
  const auto s = fit_standardizer(train);
  for (std::size_t r = 0; r < kFeatureCount; ++r) {
    double sum = 0.0, ss = 0.0;
    for (const auto& m : train)
      for (double v : apply_standardizer(m, s).row(r)) sum += v;
    const double mean = sum / (25.0 * 60.0);
    for (const auto& m : train)
      for (double v : apply_standardizer(m, s).row(r)) ss += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(ss / (25.0 * 60.0), 1.0, 1e-6);
  }
}

TEST(Standardizer, ConstantRowMapsToZero) {
  std::vector<FeatureMatrix> train(3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 0; c < kFeatureLength; ++c) {
      train[i](0, c) = 7.0;
      train[i](1, c) = static_cast<double>(i + c);
    }
  const auto s = Standardizer::fit(train);
  EXPECT_TRUE(s.zero_variance[0]);
  EXPECT_FALSE(s.zero_variance[1]);
  FeatureMatrix q;
  for (std::size_t c = 0; c < kFeatureLength; ++c) q(0, c) = 123.0;
  for (double v : s.apply(q).row(0)) EXPECT_EQ(v, 0.0);
}

TEST(Standardizer, TwoValueRow) {
  std::vector<FeatureMatrix> train(2);
  for (std::size_t c = 0; c < kFeatureLength; ++c) {
    train[0](2, c) = 1.0;
    train[1](2, c) = 3.0;
  }
  const auto s = Standardizer::fit(train);
  EXPECT_DOUBLE_EQ(s.mean[2], 2.0);
  EXPECT_DOUBLE_EQ(s.std[2], 1.0);
  for (double v : s.apply(train[0]).row(2)) EXPECT_DOUBLE_EQ(v, -1.0);
  for (double v : s.apply(train[1]).row(2)) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Standardizer, NeedsTwoMatrices) {
  EXPECT_THROW(Standardizer::fit(std::vector<FeatureMatrix>{}), ParameterError);
  EXPECT_THROW(Standardizer::fit(std::vector<FeatureMatrix>(1)), ParameterError);
}

TEST(ExtractFeatures, FiniteSevenBySixty) {
  const double fs = 256.0;
  std::vector<double> x(static_cast<std::size_t>(60 * fs));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = static_cast<double>(i) / fs * 1.1;
    double v = 0.0;
    for (int k = static_cast<int>(t) - 2; k <= static_cast<int>(t) + 1; ++k) v += two_gaussian(t - k);
    x[i] = v;
  }
  const auto m = extract_features(x, fs, PreprocessConfig{0.5, 40.0, 64});
  for (double v : m.values) EXPECT_TRUE(std::isfinite(v));
  for (double v : m.row(static_cast<std::size_t>(Feature::ppi))) EXPECT_NEAR(v, 1.0 / 1.1, 0.02);
}
