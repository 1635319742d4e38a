#pragma once

// Deterministic synthetic PPG with planted apnea episodes. Beats are a
// systolic plus a diastolic Gaussian whose positions and widths scale with
// the beat period; during an episode the beat amplitude drops by
// pwa_drop_frac. Each episode ends in its own 30 s bucket, and buckets are at
// least one apart, so every event labels exactly one window.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "apsense/error.hpp"
#include "apsense/pulse_features.hpp"
#include "apsense/signal_io.hpp"
#include "apsense/windowing.hpp"

namespace apsense {

struct SynthConfig {
  std::string subject_id = "synth";
  double duration_s = 3600.0;
  double fs = 256.0;
  double hr_bpm = 70.0;
  double apnea_events_per_hour = 12.0;
  double pwa_drop_frac = 0.5;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  double hr_drift_frac = 0.05;    // peak relative heart-rate excursion
  double hr_drift_period_s = 300.0;
  double baseline = 0.5;
};

struct SynthRecording {
  PpgRecord record;
  std::vector<ApneaEvent> events;
  // Landmarks of the noise-free signal between the first and last complete beat.
  PulseLandmarks landmarks;
};

/// One beat as a function of phase u = (t - onset) / period.
inline double beat_shape(double u) {
  const double s = (u - 0.2) / 0.07;
  const double d = (u - 0.4) / 0.15;
  return std::exp(-0.5 * s * s) + 0.5 * std::exp(-0.5 * d * d);
}

inline constexpr double kBeatSupportBefore = 1.0;  // periods
inline constexpr double kBeatSupportAfter = 3.0;

inline SynthRecording generate(const SynthConfig& cfg) {
  if (!(cfg.duration_s >= 120.0)) throw ParameterError("synthetic duration must be >= 120 s");
  if (!(cfg.fs > 0.0)) throw ParameterError("sampling rate must be positive");
  if (!(cfg.hr_bpm >= 30.0 && cfg.hr_bpm <= 180.0)) throw ParameterError("heart rate must be in [30, 180] bpm");
  if (!(cfg.apnea_events_per_hour >= 0.0)) throw ParameterError("event rate must be non-negative");
  if (!(cfg.pwa_drop_frac >= 0.0 && cfg.pwa_drop_frac < 1.0)) throw ParameterError("pwa_drop_frac must be in [0, 1)");
  if (!(cfg.noise_sigma >= 0.0)) throw ParameterError("noise_sigma must be non-negative");
  if (!(cfg.hr_drift_frac >= 0.0 && cfg.hr_drift_frac < 0.5)) throw ParameterError("hr_drift_frac must be in [0, 0.5)");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  const auto n = static_cast<std::size_t>(std::llround(cfg.duration_s * cfg.fs));
  const double duration = static_cast<double>(n) / cfg.fs;

  // Events: one per chosen bucket k in [1, W-1], chosen buckets >= 2 apart.
  const auto windows = static_cast<std::size_t>(std::floor(duration / kHopSeconds)) - 1;
  const std::size_t buckets = windows - 1;
  const auto count = static_cast<std::size_t>(std::llround(cfg.apnea_events_per_hour * duration / 3600.0));
  if (count > (buckets + 1) / 2) throw ParameterError("event rate too high for one event per 30 s bucket");
  std::vector<ApneaEvent> events;
  if (count > 0) {
    std::vector<std::size_t> slots(buckets - (count - 1));
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
    std::vector<std::size_t> chosen;
    std::sample(slots.begin(), slots.end(), std::back_inserter(chosen), count, rng);
    for (std::size_t j = 0; j < chosen.size(); ++j) {
      const std::size_t bucket = 1 + chosen[j] + j;
      const double end = kHopSeconds * static_cast<double>(bucket) + 1.0 + 28.0 * unit(rng);
      const double length = 10.0 + 20.0 * unit(rng);
      events.push_back({unit(rng) < 0.5 ? EventKind::apnea : EventKind::hypopnea, end - length, length});
    }
  }

  // Beat onsets from a slowly drifting heart rate.
  const double phase = two_pi * unit(rng);
  auto period_at = [&](double t) {
    return 60.0 / (cfg.hr_bpm * (1.0 + cfg.hr_drift_frac * std::sin(two_pi * t / cfg.hr_drift_period_s + phase)));
  };
  struct Beat {
    double onset, period, amplitude;
  };
  std::vector<Beat> beats;
  double t = -2.0 * period_at(0.0);
  while (t < duration + 2.0 * period_at(duration)) {
    const double p = period_at(t);
    const double peak_time = t + 0.2 * p;
    double amp = 1.0;
    for (const auto& e : events)
      if (peak_time >= e.start_s && peak_time <= e.end_s()) amp = 1.0 - cfg.pwa_drop_frac;
    beats.push_back({t, p, amp});
    t += p;
  }

  std::vector<double> clean(n, cfg.baseline);
  for (const auto& b : beats) {
    const double from = (b.onset - kBeatSupportBefore * b.period) * cfg.fs;
    const double to = (b.onset + kBeatSupportAfter * b.period) * cfg.fs;
    const auto i0 = static_cast<std::size_t>(std::clamp(std::ceil(from), 0.0, static_cast<double>(n)));
    const auto i1 = static_cast<std::size_t>(std::clamp(std::ceil(to), 0.0, static_cast<double>(n)));
    for (std::size_t i = i0; i < i1; ++i) {
      const double u = (static_cast<double>(i) / cfg.fs - b.onset) / b.period;
      clean[i] += b.amplitude * beat_shape(u);
    }
  }

  // Planted landmarks: per-beat argmax, argmin between consecutive peaks.
  std::vector<std::size_t> peaks;
  for (std::size_t k = 0; k + 1 < beats.size(); ++k) {
    const double from = std::ceil(beats[k].onset * cfg.fs);
    const double to = std::ceil(beats[k + 1].onset * cfg.fs);
    if (from < 1.0 || to > static_cast<double>(n - 1)) continue;
    const auto i0 = static_cast<std::size_t>(from), i1 = static_cast<std::size_t>(to);
    peaks.push_back(static_cast<std::size_t>(
        std::max_element(clean.begin() + static_cast<std::ptrdiff_t>(i0), clean.begin() + static_cast<std::ptrdiff_t>(i1)) -
        clean.begin()));
  }
  SynthRecording out;
  for (std::size_t j = 0; j + 1 < peaks.size(); ++j) {
    const auto lo = clean.begin() + static_cast<std::ptrdiff_t>(peaks[j] + 1);
    const auto hi = clean.begin() + static_cast<std::ptrdiff_t>(peaks[j + 1]);
    out.landmarks.bottoms.push_back(static_cast<std::size_t>(std::min_element(lo, hi) - clean.begin()));
    if (j > 0) out.landmarks.tops.push_back(peaks[j]);
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  out.record.subject_id = cfg.subject_id;
  out.record.fs = cfg.fs;
  out.record.samples = std::move(clean);
  if (cfg.noise_sigma > 0.0)
    for (double& v : out.record.samples) v += cfg.noise_sigma * noise(rng);
  out.record.ahi_reference = static_cast<double>(events.size()) * 3600.0 / duration;
  out.events = std::move(events);
  return out;
}

}  // namespace apsense
