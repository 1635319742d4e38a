#pragma once

// 60 s windows with 30 s hop, first-half apnea labeling, and rejection of
// windows whose pulses cannot be delineated.

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apsense/pulse_features.hpp"
#include "apsense/signal_io.hpp"

namespace apsense {

inline constexpr double kWindowSeconds = 60.0;
inline constexpr double kHopSeconds = 30.0;

enum class RejectReason { none, too_few_pulses, implausible_ppi, nonfinite };

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::none: return "none";
    case RejectReason::too_few_pulses: return "too_few_pulses";
    case RejectReason::implausible_ppi: return "implausible_ppi";
    case RejectReason::nonfinite: return "nonfinite";
  }
  return "unknown";
}

struct LabeledWindow {
  std::string subject_id;
  std::size_t index = 0;
  double start_s = 0.0;
  std::size_t start_sample = 0;
  std::vector<double> samples;
  int label = 0;
  bool rejected = false;
  RejectReason reason = RejectReason::none;
};

struct RejectionConfig {
  std::size_t min_pulses = 30;
  double ppi_min_s = 0.3;
  double ppi_max_s = 2.0;
  double max_bad_ppi_frac = 0.2;
};

inline std::size_t window_sample_count(double fs) {
  return static_cast<std::size_t>(std::llround(kWindowSeconds * fs));
}

/// Windows start at 0, 30, 60, ... s; partial trailing windows are dropped.
inline std::vector<LabeledWindow> segment(const PpgRecord& rec) {
  if (!(rec.fs > 0.0)) throw ParameterError("sampling rate must be positive");
  std::vector<LabeledWindow> out;
  const std::size_t len = window_sample_count(rec.fs);
  for (std::size_t k = 0;; ++k) {
    const double start_s = kHopSeconds * static_cast<double>(k);
    if (start_s + kWindowSeconds > rec.duration_s()) break;
    const auto start = static_cast<std::size_t>(std::llround(start_s * rec.fs));
    if (start + len > rec.samples.size()) break;
    LabeledWindow w;
    w.subject_id = rec.subject_id;
    w.index = k;
    w.start_s = start_s;
    w.start_sample = start;
    w.samples.assign(rec.samples.begin() + static_cast<std::ptrdiff_t>(start),
                     rec.samples.begin() + static_cast<std::ptrdiff_t>(start + len));
    out.push_back(std::move(w));
  }
  return out;
}

/// 1 iff some event ends in [start_s, start_s + 30).
inline int annotate(double window_start_s, std::span<const ApneaEvent> events) {
  for (const auto& e : events) {
    const double end = e.end_s();
    if (end >= window_start_s && end < window_start_s + kHopSeconds) return 1;
  }
  return 0;
}

inline int annotate(const LabeledWindow& w, std::span<const ApneaEvent> events) {
  return annotate(w.start_s, events);
}

struct RejectDecision {
  bool rejected = false;
  RejectReason reason = RejectReason::none;
};

/// `landmarks` is empty when delineation failed.
inline RejectDecision reject(std::span<const double> samples, double fs,
                             const std::optional<PulseLandmarks>& landmarks, const RejectionConfig& cfg = {}) {
  for (double v : samples)
    if (!std::isfinite(v)) return {true, RejectReason::nonfinite};
  if (!landmarks || landmarks->pulse_count() < cfg.min_pulses) return {true, RejectReason::too_few_pulses};
  const auto& tops = landmarks->tops;
  const std::size_t intervals = tops.size() - 1;
  std::size_t bad = 0;
  for (std::size_t i = 0; i < intervals; ++i) {
    const double ppi = static_cast<double>(tops[i + 1] - tops[i]) / fs;
    if (ppi < cfg.ppi_min_s || ppi > cfg.ppi_max_s) ++bad;
  }
  if (intervals > 0 && static_cast<double>(bad) > cfg.max_bad_ppi_frac * static_cast<double>(intervals))
    return {true, RejectReason::implausible_ppi};
  return {};
}

inline RejectDecision reject(const LabeledWindow& w, double fs, const std::optional<PulseLandmarks>& landmarks,
                             const RejectionConfig& cfg = {}) {
  return reject(w.samples, fs, landmarks, cfg);
}

struct ScreenedWindow {
  RejectDecision decision;
  std::vector<double> filtered;
  std::optional<PulseLandmarks> landmarks;
};

/// Filters and delineates a raw window, then applies the rejection rules.
inline ScreenedWindow screen(std::span<const double> samples, double fs, const PreprocessConfig& pre,
                             std::size_t min_separation, const RejectionConfig& cfg) {
  ScreenedWindow s;
  for (double v : samples) {
    if (!std::isfinite(v)) {
      s.decision = {true, RejectReason::nonfinite};
      return s;
    }
  }
  s.filtered = preprocess(samples, fs, pre);
  try {
    s.landmarks = delineate(s.filtered, min_separation);
  } catch (const NoPulses&) {
    s.landmarks.reset();
  }
  s.decision = reject(samples, fs, s.landmarks, cfg);
  return s;
}

}  // namespace apsense
