#pragma once

// Minority-class augmentation on raw segments (jitter, magnitude warp,
// scaling, time warp, permutation) followed by random undersampling of the
// majority class to parity.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "apsense/error.hpp"

namespace apsense {

enum class Technique { jitter, magnitude_warp, scale, time_warp, permutation };

inline constexpr std::array<Technique, 5> kTechniques{Technique::jitter, Technique::magnitude_warp,
                                                      Technique::scale, Technique::time_warp,
                                                      Technique::permutation};

inline std::string_view to_string(Technique t) {
  switch (t) {
    case Technique::jitter: return "jitter";
    case Technique::magnitude_warp: return "magnitude_warp";
    case Technique::scale: return "scale";
    case Technique::time_warp: return "time_warp";
    case Technique::permutation: return "permutation";
  }
  return "unknown";
}

struct AugmentationConfig {
  double jitter_sigma_frac = 0.03;  // of the window's standard deviation
  double scale_sigma = 0.1;
  double magw_sigma = 0.2;
  std::size_t magw_knots = 4;
  double timew_sigma = 0.2;
  std::size_t timew_knots = 4;
  std::size_t perm_chunks = 4;

  /// Every technique reduces to the identity.
  static AugmentationConfig identity() { return {0.0, 0.0, 0.0, 4, 0.0, 4, 1}; }
};

struct LabeledSet {
  std::vector<std::vector<double>> windows;
  std::vector<int> labels;
  // Index of the source window for each entry (itself for originals).
  std::vector<std::size_t> origin;
  // Technique applied, only meaningful where origin differs from position.
  std::vector<Technique> technique;
};

namespace detail {

inline std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

inline double population_std(std::span<const double> x) {
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(x.size()));
}

/// Natural cubic spline through (xs, ys), evaluated at 0 .. n-1.
inline std::vector<double> natural_spline(std::span<const double> xs, std::span<const double> ys, std::size_t n) {
  const std::size_t m = xs.size();
  std::vector<double> h(m - 1), second(m, 0.0);
  for (std::size_t i = 0; i + 1 < m; ++i) h[i] = xs[i + 1] - xs[i];
  if (m > 2) {
    // Tridiagonal system for interior second derivatives (Thomas algorithm).
    const std::size_t k = m - 2;
    std::vector<double> diag(k), upper(k), rhs(k);
    for (std::size_t i = 0; i < k; ++i) {
      diag[i] = 2.0 * (h[i] + h[i + 1]);
      upper[i] = h[i + 1];
      rhs[i] = 6.0 * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
    }
    for (std::size_t i = 1; i < k; ++i) {
      const double w = h[i] / diag[i - 1];
      diag[i] -= w * upper[i - 1];
      rhs[i] -= w * rhs[i - 1];
    }
    second[k] = rhs[k - 1] / diag[k - 1];
    for (std::size_t i = k - 1; i >= 1; --i) second[i] = (rhs[i - 1] - upper[i - 1] * second[i + 1]) / diag[i - 1];
  }
  std::vector<double> out(n);
  std::size_t seg = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double x = static_cast<double>(t);
    while (seg + 2 < m && x > xs[seg + 1]) ++seg;
    const double a = (xs[seg + 1] - x) / h[seg];
    const double b = (x - xs[seg]) / h[seg];
    out[t] = a * ys[seg] + b * ys[seg + 1] +
             ((a * a * a - a) * second[seg] + (b * b * b - b) * second[seg + 1]) * h[seg] * h[seg] / 6.0;
  }
  return out;
}

/// Smooth random curve around 1: `knots` interior knots plus both ends, each
/// drawn from N(1, sigma), joined by a natural cubic spline.
inline std::vector<double> random_curve(std::size_t n, std::size_t knots, double sigma, std::mt19937_64& rng) {
  const std::size_t m = knots + 2;
  std::vector<double> xs(m), ys(m);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    xs[i] = static_cast<double>(n - 1) * static_cast<double>(i) / static_cast<double>(m - 1);
    ys[i] = 1.0 + sigma * normal(rng);
  }
  return natural_spline(xs, ys, n);
}

}  // namespace detail

inline std::vector<double> apply_technique(Technique t, std::span<const double> x, const AugmentationConfig& cfg,
                                           std::mt19937_64& rng) {
  const std::size_t n = x.size();
  std::vector<double> out(x.begin(), x.end());
  if (n < 2) return out;
  std::normal_distribution<double> normal(0.0, 1.0);
  switch (t) {
    case Technique::jitter: {
      const double sigma = cfg.jitter_sigma_frac * detail::population_std(x);
      for (double& v : out) v += sigma * normal(rng);
      break;
    }
    case Technique::scale: {
      const double factor = 1.0 + cfg.scale_sigma * normal(rng);
      for (double& v : out) v *= factor;
      break;
    }
    case Technique::magnitude_warp: {
      const auto curve = detail::random_curve(n, cfg.magw_knots, cfg.magw_sigma, rng);
      for (std::size_t i = 0; i < n; ++i) out[i] *= curve[i];
      break;
    }
    case Technique::time_warp: {
      // Warped time = cumulative sum of a positive random speed curve, mapped
      // onto [0, n-1]; output[i] = x at warped position i.
      auto speed = detail::random_curve(n, cfg.timew_knots, cfg.timew_sigma, rng);
      for (double& s : speed) s = std::max(s, 1e-3);
      std::vector<double> cum(n);
      std::partial_sum(speed.begin(), speed.end(), cum.begin());
      const double span = cum[n - 1] - cum[0];
      for (std::size_t i = 0; i < n; ++i) {
        const double pos = (cum[i] - cum[0]) * static_cast<double>(n - 1) / span;
        const auto lo = std::min(static_cast<std::size_t>(pos), n - 2);
        const double frac = pos - static_cast<double>(lo);
        out[i] = x[lo] + frac * (x[lo + 1] - x[lo]);
      }
      break;
    }
    case Technique::permutation: {
      const std::size_t chunks = std::clamp<std::size_t>(cfg.perm_chunks, 1, n);
      if (chunks == 1) break;
      const std::size_t base = n / chunks;
      std::vector<std::size_t> order(chunks);
      std::iota(order.begin(), order.end(), 0);
      // A non-identity order so the copy always differs from its source.
      do {
        std::shuffle(order.begin(), order.end(), rng);
      } while (std::is_sorted(order.begin(), order.end()));
      out.clear();
      for (std::size_t c : order) {
        const std::size_t begin = c * base;
        const std::size_t end = c + 1 == chunks ? n : begin + base;
        out.insert(out.end(), x.begin() + static_cast<std::ptrdiff_t>(begin),
                   x.begin() + static_cast<std::ptrdiff_t>(end));
      }
      break;
    }
  }
  return out;
}

/// One augmented copy of `window`: technique drawn uniformly, RNG derived
/// from (seed, index).
struct AugmentedCopy {
  Technique technique;
  std::vector<double> samples;
};

inline AugmentedCopy augment_copy(std::span<const double> window, std::uint64_t seed, std::uint64_t index,
                                  const AugmentationConfig& cfg = {}) {
  auto rng = detail::derived_rng(seed, index);
  std::uniform_int_distribution<std::size_t> pick(0, kTechniques.size() - 1);
  const Technique t = kTechniques[pick(rng)];
  return {t, apply_technique(t, window, cfg, rng)};
}

/// Appends one augmented copy of every positive window, so the positive
/// count doubles. Negatives are untouched.
inline LabeledSet augment_minority(std::span<const std::vector<double>> windows, std::span<const int> labels,
                                   std::uint64_t seed, const AugmentationConfig& cfg = {}) {
  if (windows.size() != labels.size()) throw ParameterError("windows and labels differ in length");
  LabeledSet out;
  out.windows.assign(windows.begin(), windows.end());
  out.labels.assign(labels.begin(), labels.end());
  out.origin.resize(windows.size());
  std::iota(out.origin.begin(), out.origin.end(), 0);
  out.technique.assign(windows.size(), Technique::jitter);

  std::size_t positives = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (labels[i] != 1) continue;
    ++positives;
    auto copy = augment_copy(windows[i], seed, i, cfg);
    out.windows.push_back(std::move(copy.samples));
    out.labels.push_back(1);
    out.origin.push_back(i);
    out.technique.push_back(copy.technique);
  }
  if (positives == 0) throw ParameterError("no positive windows to augment");
  return out;
}

/// Positions kept by undersampling: every minority entry plus a uniform
/// random subset (without replacement) of the majority of equal size, in
/// ascending order.
inline std::vector<std::size_t> undersample_indices(std::span<const int> labels, std::uint64_t seed) {
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  const bool neg_major = neg.size() >= pos.size();
  const auto& majority = neg_major ? neg : pos;
  std::vector<std::size_t> keep = neg_major ? pos : neg;
  const std::size_t target = keep.size();
  auto rng = detail::derived_rng(seed, ~std::uint64_t{0});
  std::sample(majority.begin(), majority.end(), std::back_inserter(keep), target, rng);
  std::sort(keep.begin(), keep.end());
  return keep;
}

/// Keeps every minority window and an equal-sized random subset of the
/// majority class. Relative order is preserved.
inline LabeledSet undersample_majority(const LabeledSet& in, std::uint64_t seed) {
  if (in.windows.size() != in.labels.size()) throw ParameterError("windows and labels differ in length");
  LabeledSet out;
  for (std::size_t i : undersample_indices(in.labels, seed)) {
    out.windows.push_back(in.windows[i]);
    out.labels.push_back(in.labels[i]);
    out.origin.push_back(in.origin.empty() ? i : in.origin[i]);
    out.technique.push_back(in.technique.empty() ? Technique::jitter : in.technique[i]);
  }
  return out;
}

inline LabeledSet undersample_majority(std::span<const std::vector<double>> windows, std::span<const int> labels,
                                       std::uint64_t seed) {
  LabeledSet in;
  in.windows.assign(windows.begin(), windows.end());
  in.labels.assign(labels.begin(), labels.end());
  return undersample_majority(in, seed);
}

/// Augment then undersample.
inline LabeledSet balance(std::span<const std::vector<double>> windows, std::span<const int> labels,
                          std::uint64_t seed, const AugmentationConfig& cfg = {}) {
  return undersample_majority(augment_minority(windows, labels, seed, cfg), seed);
}

}  // namespace apsense
