#pragma once

// Window conditioning: Chebyshev type II high-pass (zero phase), moving
// average smoothing, and a periodogram band-power SNR.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include <fftw3.h>

#include "apsense/error.hpp"

namespace apsense {

/// Direct-form coefficients, a[0] == 1.
struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 3> a{};
};

struct PreprocessConfig {
  double hp_cutoff_hz = 20.0;
  double hp_atten_db = 40.0;
  std::size_t ma_width = 64;
};

inline constexpr std::size_t kFilterMinLength = 16;

/// Second-order Chebyshev-II high-pass. `cutoff_hz` is the -3 dB point of a
/// single pass; the equiripple stopband (>= stop_atten_db down) sits below
/// cutoff_hz * cosh(acosh(1/eps)/2)^-1 in the prewarped domain.
inline Biquad design_cheby2_highpass(double fs, double cutoff_hz, double stop_atten_db) {
  using cd = std::complex<double>;
  if (!(fs > 0.0)) throw ParameterError("sampling rate must be positive");
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < fs / 2.0))
    throw ParameterError("high-pass cutoff must lie in (0, fs/2)");
  if (!(stop_atten_db > 0.0)) throw ParameterError("stopband attenuation must be positive");

  constexpr int order = 2;
  const double pi = std::numbers::pi;
  const double eps = 1.0 / std::sqrt(std::pow(10.0, 0.1 * stop_atten_db) - 1.0);
  const double mu = std::asinh(1.0 / eps) / order;

  // Analog low-pass prototype, stopband edge at 1 rad/s.
  std::array<cd, order> zeros, poles;
  for (int i = 0; i < order; ++i) {
    const int m = -order + 1 + 2 * i;
    zeros[i] = -std::conj(cd(0.0, 1.0) / std::sin(m * pi / (2.0 * order)));
    const cd base = -std::exp(cd(0.0, pi * m / (2.0 * order)));
    poles[i] = 1.0 / cd(std::sinh(mu) * base.real(), std::cosh(mu) * base.imag());
  }
  cd num(1.0), den(1.0);
  for (int i = 0; i < order; ++i) {
    num *= -poles[i];
    den *= -zeros[i];
  }
  double gain = (num / den).real();

  // Low-pass frequency where |H|^2 = 1/2, relative to the stopband edge.
  const double half_power = 1.0 / std::cosh(std::acosh(1.0 / eps) / order);
  const double fs2 = 2.0;  // bilinear transform with T = 1
  const double warped_cutoff = fs2 * std::tan(pi * cutoff_hz / fs);
  const double warped_edge = warped_cutoff * half_power;

  // Low-pass -> high-pass: s -> warped_edge / s.
  cd hp_num(1.0), hp_den(1.0);
  for (int i = 0; i < order; ++i) {
    hp_num *= -zeros[i];
    hp_den *= -poles[i];
    zeros[i] = warped_edge / zeros[i];
    poles[i] = warped_edge / poles[i];
  }
  gain *= (hp_num / hp_den).real();

  // Bilinear transform.
  cd bz_num(1.0), bz_den(1.0);
  for (int i = 0; i < order; ++i) {
    bz_num *= fs2 - zeros[i];
    bz_den *= fs2 - poles[i];
    zeros[i] = (fs2 + zeros[i]) / (fs2 - zeros[i]);
    poles[i] = (fs2 + poles[i]) / (fs2 - poles[i]);
  }
  gain *= (bz_num / bz_den).real();

  Biquad q;
  q.b = {gain, -gain * (zeros[0] + zeros[1]).real(), gain * (zeros[0] * zeros[1]).real()};
  q.a = {1.0, -(poles[0] + poles[1]).real(), (poles[0] * poles[1]).real()};
  return q;
}

/// H(e^{jw}) of a single pass at frequency `f_hz`.
inline std::complex<double> frequency_response(const Biquad& q, double f_hz, double fs) {
  const double w = 2.0 * std::numbers::pi * f_hz / fs;
  const std::complex<double> z1 = std::polar(1.0, -w);
  const std::complex<double> z2 = z1 * z1;
  return (q.b[0] + q.b[1] * z1 + q.b[2] * z2) / (q.a[0] + q.a[1] * z1 + q.a[2] * z2);
}

namespace detail {

// Transposed direct form II, state initialised to the step steady state
// scaled by `x0`.
inline void biquad_inplace(const Biquad& q, std::vector<double>& x) {
  if (x.empty()) return;
  const double sum_b = q.b[0] + q.b[1] + q.b[2];
  const double sum_a = q.a[0] + q.a[1] + q.a[2];
  const double dc = sum_b / sum_a;
  double z2 = (q.b[2] - q.a[2] * dc) * x[0];
  double z1 = (q.b[1] - q.a[1] * dc) * x[0] + z2;
  for (double& v : x) {
    const double in = v;
    const double out = q.b[0] * in + z1;
    z1 = q.b[1] * in - q.a[1] * out + z2;
    z2 = q.b[2] * in - q.a[2] * out;
    v = out;
  }
}

}  // namespace detail

/// Zero-phase application: odd extension at both ends, forward pass, backward
/// pass, trim.
inline std::vector<double> filtfilt(const Biquad& q, std::span<const double> x) {
  const std::size_t n = x.size();
  const std::size_t pad = std::min<std::size_t>(9, n - 1);
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  detail::biquad_inplace(q, ext);
  std::reverse(ext.begin(), ext.end());
  detail::biquad_inplace(q, ext);
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad),
          ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

inline std::vector<double> highpass_cheby2(std::span<const double> samples, double fs,
                                           double cutoff_hz = 20.0, double stop_atten_db = 40.0) {
  const Biquad q = design_cheby2_highpass(fs, cutoff_hz, stop_atten_db);
  if (samples.size() < kFilterMinLength)
    throw ParameterError("high-pass needs at least 16 samples");
  return filtfilt(q, samples);
}

/// Valid-mode running mean of `width` samples, edge-padded (front (w-1)/2,
/// back the remainder) back to the input length.
inline std::vector<double> moving_average(std::span<const double> samples, std::size_t width = 64) {
  if (width < 1) throw ParameterError("moving-average width must be >= 1");
  if (samples.size() < width) throw ParameterError("signal shorter than moving-average width");
  const std::size_t n = samples.size();
  const std::size_t valid = n - width + 1;
  const std::size_t front = (width - 1) / 2;
  std::vector<double> out(n);

  double sum = 0.0;
  for (std::size_t i = 0; i < width; ++i) sum += samples[i];
  const double inv = 1.0 / static_cast<double>(width);
  for (std::size_t i = 0; i < valid; ++i) {
    if (i > 0) sum += samples[i + width - 1] - samples[i - 1];
    out[front + i] = sum * inv;
  }
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(front), out[front]);
  std::fill(out.begin() + static_cast<std::ptrdiff_t>(front + valid), out.end(), out[front + valid - 1]);
  return out;
}

/// High-pass then moving average.
inline std::vector<double> preprocess(std::span<const double> samples, double fs,
                                      const PreprocessConfig& cfg = {}) {
  auto filtered = highpass_cheby2(samples, fs, cfg.hp_cutoff_hz, cfg.hp_atten_db);
  return moving_average(filtered, cfg.ma_width);
}

inline constexpr double kSnrBandLowHz = 0.5;
inline constexpr double kSnrBandHighHz = 8.0;
inline constexpr double kSnrCapDb = 100.0;

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// One-sided periodogram, k = 0 .. n/2 (interior bins doubled).
inline std::vector<double> periodogram(std::span<const double> x) {
  const int n = static_cast<int>(x.size());
  const int bins = n / 2 + 1;
  double* in = fftw_alloc_real(static_cast<std::size_t>(n));
  fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(bins));
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  }
  std::copy(x.begin(), x.end(), in);
  fftw_execute(plan);
  std::vector<double> power(static_cast<std::size_t>(bins));
  for (int k = 0; k < bins; ++k) {
    const bool interior = k > 0 && !(n % 2 == 0 && k == n / 2);
    power[k] = (interior ? 2.0 : 1.0) * (out[k][0] * out[k][0] + out[k][1] * out[k][1]);
  }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(out);
  fftw_free(in);
  return power;
}

}  // namespace detail

/// 10 log10(P[0.5, 8] Hz / P elsewhere), DC bin excluded, clamped to +-100 dB.
inline double snr_db(std::span<const double> window, double fs) {
  if (!(fs > 0.0)) throw ParameterError("sampling rate must be positive");
  if (static_cast<double>(window.size()) < 2.0 * fs)
    throw ParameterError("SNR window must span at least 2 s");
  const auto power = detail::periodogram(window);
  const double n = static_cast<double>(window.size());
  double in_band = 0.0, out_band = 0.0;
  for (std::size_t k = 1; k < power.size(); ++k) {
    const double f = static_cast<double>(k) * fs / n;
    (f >= kSnrBandLowHz && f <= kSnrBandHighHz ? in_band : out_band) += power[k];
  }
  if (out_band <= 0.0) return kSnrCapDb;
  if (in_band <= 0.0) return -kSnrCapDb;
  return std::clamp(10.0 * std::log10(in_band / out_band), -kSnrCapDb, kSnrCapDb);
}

}  // namespace apsense
