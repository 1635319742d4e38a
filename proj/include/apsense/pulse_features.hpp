#pragma once

// Pulse delineation and the seven morphological feature series
// (PWA, PPI, dPWA, dPPI, SPD, DPD, PA), resampled to 60 points and
// standardized per feature row.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "apsense/error.hpp"
#include "apsense/preprocess.hpp"

namespace apsense {

/// Trough/peak sample indices. Pulse n spans bottoms[n] -> tops[n] -> bottoms[n+1].
struct PulseLandmarks {
  std::vector<std::size_t> bottoms;
  std::vector<std::size_t> tops;

  std::size_t pulse_count() const { return tops.size(); }
  bool operator==(const PulseLandmarks&) const = default;
};

/// Strict alternation bottom < top < bottom ..., one more bottom than tops.
inline bool is_valid(const PulseLandmarks& lm) {
  if (lm.bottoms.size() != lm.tops.size() + 1) return false;
  for (std::size_t n = 0; n < lm.tops.size(); ++n) {
    if (!(lm.bottoms[n] < lm.tops[n] && lm.tops[n] < lm.bottoms[n + 1])) return false;
  }
  return true;
}

enum class Feature : std::size_t { pwa = 0, ppi, dpwa, dppi, spd, dpd, pa };

inline constexpr std::size_t kFeatureCount = 7;
inline constexpr std::size_t kFeatureLength = 60;
inline constexpr std::size_t kFeatureSize = kFeatureCount * kFeatureLength;
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames{"PWA", "PPI", "dPWA", "dPPI",
                                                                      "SPD", "DPD", "PA"};

/// Variable-length series, one per feature, indexed by Feature.
struct FeatureSeries {
  std::array<std::vector<double>, kFeatureCount> rows;

  const std::vector<double>& operator[](Feature f) const { return rows[static_cast<std::size_t>(f)]; }
  std::vector<double>& operator[](Feature f) { return rows[static_cast<std::size_t>(f)]; }
};

/// 7 x 60, row-major, rows in Feature order.
struct FeatureMatrix {
  std::array<double, kFeatureSize> values{};

  double& operator()(std::size_t row, std::size_t col) { return values[row * kFeatureLength + col]; }
  double operator()(std::size_t row, std::size_t col) const { return values[row * kFeatureLength + col]; }
  std::span<const double, kFeatureLength> row(std::size_t r) const {
    return std::span<const double, kFeatureLength>(values.data() + r * kFeatureLength, kFeatureLength);
  }
};

/// Local extrema at least `min_separation` samples apart, repaired into a
/// strict trough/peak alternation that starts and ends on a trough.
///
/// A sample is a candidate maximum (minimum) when it is strictly greater
/// (less) than every other sample within +-min_separation, the window clipped
/// to the signal. The first and last samples never qualify. Among consecutive
/// candidates of the same kind only the most extreme survives (earliest on
/// ties).
inline PulseLandmarks delineate(std::span<const double> x, std::size_t min_separation = 30) {
  const std::size_t n = x.size();
  if (min_separation < 1) throw ParameterError("min_separation must be >= 1");
  if (n <= 2 * min_separation) throw ParameterError("signal too short for delineation");

  struct Extremum {
    std::size_t index;
    bool is_max;
  };
  std::vector<Extremum> cand;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const std::size_t lo = i > min_separation ? i - min_separation : 0;
    const std::size_t hi = std::min(n - 1, i + min_separation);
    bool is_max = true, is_min = true;
    for (std::size_t j = lo; j <= hi && (is_max || is_min); ++j) {
      if (j == i) continue;
      if (!(x[i] > x[j])) is_max = false;
      if (!(x[i] < x[j])) is_min = false;
    }
    if (is_max) cand.push_back({i, true});
    else if (is_min) cand.push_back({i, false});
  }

  std::vector<Extremum> alt;
  for (const auto& c : cand) {
    if (!alt.empty() && alt.back().is_max == c.is_max) {
      const bool more_extreme = c.is_max ? x[c.index] > x[alt.back().index] : x[c.index] < x[alt.back().index];
      if (more_extreme) alt.back() = c;
      continue;
    }
    alt.push_back(c);
  }
  while (!alt.empty() && alt.front().is_max) alt.erase(alt.begin());
  while (!alt.empty() && alt.back().is_max) alt.pop_back();

  PulseLandmarks lm;
  for (const auto& e : alt) (e.is_max ? lm.tops : lm.bottoms).push_back(e.index);
  if (lm.bottoms.size() < 2) throw NoPulses("fewer than two pulse troughs found");
  return lm;
}

/// Per-pulse features of a window given its landmarks. Time features are in
/// seconds; PA sums samples over [bottom_n, bottom_{n+1}] inclusive.
inline FeatureSeries compute_features(std::span<const double> x, double fs, const PulseLandmarks& lm) {
  if (!(fs > 0.0)) throw ParameterError("sampling rate must be positive");
  if (!is_valid(lm)) throw ParameterError("landmarks violate trough/peak alternation");
  if (lm.bottoms.back() >= x.size()) throw ParameterError("landmark index past end of signal");
  const std::size_t N = lm.pulse_count();
  if (N < 3) throw InsufficientPulses("need at least 3 pulses, got " + std::to_string(N));

  const auto& tp = lm.tops;
  const auto& bp = lm.bottoms;
  auto seconds = [fs](std::size_t later, std::size_t earlier) {
    return static_cast<double>(later - earlier) / fs;
  };

  FeatureSeries s;
  auto& pwa = s[Feature::pwa];
  auto& ppi = s[Feature::ppi];
  auto& dpwa = s[Feature::dpwa];
  auto& dppi = s[Feature::dppi];
  auto& spd = s[Feature::spd];
  auto& dpd = s[Feature::dpd];
  auto& pa = s[Feature::pa];

  for (std::size_t k = 0; k < N; ++k) {
    pwa.push_back(x[tp[k]] - x[bp[k]]);
    spd.push_back(seconds(tp[k], bp[k]));
    dpd.push_back(seconds(bp[k + 1], tp[k]));
    double area = 0.0;
    for (std::size_t i = bp[k]; i <= bp[k + 1]; ++i) area += x[i];
    pa.push_back(area);
  }
  for (std::size_t k = 0; k + 1 < N; ++k) {
    ppi.push_back(seconds(tp[k + 1], tp[k]));
    dpwa.push_back(pwa[k + 1] - pwa[k]);
  }
  for (std::size_t k = 0; k + 1 < ppi.size(); ++k) dppi.push_back(ppi[k + 1] - ppi[k]);
  return s;
}

/// Fourier-domain resampling to `num` points (real FFT semantics: spectrum
/// truncated or zero-padded, the Nyquist bin split or folded, output scaled by
/// num/len).
inline std::vector<double> resample(std::span<const double> x, std::size_t num) {
  const std::size_t len = x.size();
  if (len < 2) throw ParameterError("resampling needs at least 2 points");
  if (num < 1) throw ParameterError("resample target must be positive");
  const double two_pi = 2.0 * std::numbers::pi;

  const std::size_t keep = std::min(len, num);
  const std::size_t nyq = keep / 2 + 1;
  const std::size_t out_bins = num / 2 + 1;
  std::vector<std::complex<double>> spec(out_bins);
  for (std::size_t k = 0; k < std::min(nyq, out_bins); ++k) {
    std::complex<double> acc{};
    for (std::size_t i = 0; i < len; ++i) {
      const double ang = -two_pi * static_cast<double>((k * i) % len) / static_cast<double>(len);
      acc += x[i] * std::polar(1.0, ang);
    }
    spec[k] = acc;
  }
  if (keep % 2 == 0 && keep / 2 < out_bins) {
    if (num < len) spec[keep / 2] *= 2.0;
    else if (len < num) spec[keep / 2] *= 0.5;
  }

  // Inverse real DFT of length num.
  std::vector<double> y(num);
  for (std::size_t m = 0; m < num; ++m) {
    double acc = spec[0].real();
    for (std::size_t k = 1; k < out_bins; ++k) {
      const double ang = two_pi * static_cast<double>((k * m) % num) / static_cast<double>(num);
      const double term = (spec[k] * std::polar(1.0, ang)).real();
      const bool nyquist = num % 2 == 0 && k == num / 2;
      acc += nyquist ? spec[k].real() * std::cos(ang) : 2.0 * term;
    }
    y[m] = acc / static_cast<double>(num) * (static_cast<double>(num) / static_cast<double>(len));
  }
  return y;
}

inline std::vector<double> resample_60(std::span<const double> series) {
  return resample(series, kFeatureLength);
}

inline FeatureMatrix to_matrix(const FeatureSeries& s) {
  FeatureMatrix m;
  for (std::size_t r = 0; r < kFeatureCount; ++r) {
    const auto row = resample_60(s.rows[r]);
    std::copy(row.begin(), row.end(), m.values.begin() + static_cast<std::ptrdiff_t>(r * kFeatureLength));
  }
  return m;
}

/// Raw window -> filtered -> delineated -> 7x60 features.
inline FeatureMatrix extract_features(std::span<const double> window, double fs,
                                      const PreprocessConfig& pre = {}, std::size_t min_separation = 30) {
  const auto filtered = preprocess(window, fs, pre);
  const auto lm = delineate(filtered, min_separation);
  return to_matrix(compute_features(filtered, fs, lm));
}

/// Per-row z-score statistics pooled over every training window and column.
struct Standardizer {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> std{};
  std::array<bool, kFeatureCount> zero_variance{};

  static constexpr double kMinStd = 1e-12;

  static Standardizer fit(std::span<const FeatureMatrix> training) {
    if (training.size() < 2) throw ParameterError("standardizer needs at least 2 training matrices");
    Standardizer s;
    const double count = static_cast<double>(training.size() * kFeatureLength);
    for (std::size_t r = 0; r < kFeatureCount; ++r) {
      double sum = 0.0;
      for (const auto& m : training)
        for (double v : m.row(r)) sum += v;
      const double mean = sum / count;
      double ss = 0.0;
      for (const auto& m : training)
        for (double v : m.row(r)) ss += (v - mean) * (v - mean);
      s.mean[r] = mean;
      s.std[r] = std::sqrt(ss / count);
      s.zero_variance[r] = s.std[r] < kMinStd;
    }
    return s;
  }

  FeatureMatrix apply(const FeatureMatrix& m) const {
    FeatureMatrix out;
    for (std::size_t r = 0; r < kFeatureCount; ++r)
      for (std::size_t c = 0; c < kFeatureLength; ++c)
        out(r, c) = zero_variance[r] ? 0.0 : (m(r, c) - mean[r]) / std[r];
    return out;
  }
};

inline Standardizer fit_standardizer(std::span<const FeatureMatrix> training) {
  return Standardizer::fit(training);
}

inline FeatureMatrix apply_standardizer(const FeatureMatrix& m, const Standardizer& s) { return s.apply(m); }

}  // namespace apsense
