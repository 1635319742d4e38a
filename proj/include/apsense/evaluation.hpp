#pragma once

// Subject-independent split plans, window classification metrics, fold
// aggregation, and the window-based AHI estimates (sAHI from labels, pAHI
// from predictions).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apsense/error.hpp"

namespace apsense {

// ---------------------------------------------------------------------------
// Splits

inline constexpr std::size_t kOuterFolds = 5;
inline constexpr std::size_t kInnerFolds = 5;
inline constexpr double kTestFraction = 0.2;
inline constexpr double kStratumAhi = 15.0;

struct SubjectStratum {
  std::string subject_id;
  double ahi = 0.0;

  bool high() const { return ahi > kStratumAhi; }
};

struct OuterFold {
  std::vector<std::string> development;
  std::vector<std::string> test;
  std::uint64_t inner_seed = 0;  // drives the inner train/validation folds
};

struct SplitPlan {
  std::uint64_t seed = 0;
  std::vector<SubjectStratum> subjects;
  std::vector<OuterFold> outer;
};

/// Five development/test partitions of the subjects at 80:20. Each test set
/// holds floor(T/2) or ceil(T/2) subjects from each AHI stratum (<= 15,
/// > 15); strata are shuffled once and consumed cyclically so test sets
/// rotate through the subjects. The larger stratum takes the odd subject.
inline SplitPlan make_splits(std::span<const SubjectStratum> subjects, std::uint64_t seed) {
  if (subjects.size() < 10) throw ParameterError("splits need at least 10 subjects");
  std::vector<std::size_t> low, high;
  {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      if (!seen.insert(subjects[i].subject_id).second)
        throw ParameterError("duplicate subject id " + subjects[i].subject_id);
      if (!(subjects[i].ahi >= 0.0)) throw ParameterError("subject AHI must be non-negative");
      (subjects[i].high() ? high : low).push_back(i);
    }
  }
  if (low.empty() || high.empty()) throw ParameterError("both AHI strata must be non-empty");

  const auto test_size = static_cast<std::size_t>(std::llround(kTestFraction * static_cast<double>(subjects.size())));
  const bool low_bigger = low.size() >= high.size();
  const std::size_t take_low = low_bigger ? (test_size + 1) / 2 : test_size / 2;
  const std::size_t take_high = test_size - take_low;
  if (take_low > low.size() || take_high > high.size())
    throw ParameterError("an AHI stratum is too small for a balanced test set");

  std::mt19937_64 rng(seed);
  std::shuffle(low.begin(), low.end(), rng);
  std::shuffle(high.begin(), high.end(), rng);

  SplitPlan plan;
  plan.seed = seed;
  plan.subjects.assign(subjects.begin(), subjects.end());
  for (std::size_t f = 0; f < kOuterFolds; ++f) {
    std::vector<bool> in_test(subjects.size(), false);
    for (std::size_t j = 0; j < take_low; ++j) in_test[low[(f * take_low + j) % low.size()]] = true;
    for (std::size_t j = 0; j < take_high; ++j) in_test[high[(f * take_high + j) % high.size()]] = true;
    OuterFold fold;
    for (std::size_t i = 0; i < subjects.size(); ++i)
      (in_test[i] ? fold.test : fold.development).push_back(subjects[i].subject_id);
    fold.inner_seed = rng();
    plan.outer.push_back(std::move(fold));
  }
  return plan;
}

/// Label-stratified k-fold assignment of development windows (shuffled with
/// `seed`). Returns the fold index of every window.
inline std::vector<std::size_t> inner_folds(std::span<const int> labels, std::uint64_t seed,
                                            std::size_t folds = kInnerFolds) {
  if (folds < 2) throw ParameterError("need at least 2 inner folds");
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(pos.begin(), pos.end(), rng);
  std::shuffle(neg.begin(), neg.end(), rng);
  std::vector<std::size_t> fold(labels.size());
  // Negatives continue the round-robin where positives stopped so fold sizes
  // differ by at most one.
  std::size_t next = 0;
  for (std::size_t i : pos) fold[i] = next++ % folds;
  for (std::size_t i : neg) fold[i] = next++ % folds;
  return fold;
}

// ---------------------------------------------------------------------------
// Metrics

struct Confusion {
  std::size_t tp = 0, fn = 0, tn = 0, fp = 0;

  std::size_t positives() const { return tp + fn; }
  std::size_t negatives() const { return tn + fp; }
  std::size_t total() const { return tp + fn + tn + fp; }
};

/// Percentages. Sensitivity/specificity are empty when the labels lack the
/// corresponding class; macro F1 averages the per-class F1 that are defined.
struct Metrics {
  double accuracy = 0.0;
  std::optional<double> macro_f1;
  std::optional<double> sensitivity;
  std::optional<double> specificity;
  Confusion confusion;
};

inline Confusion confusion_matrix(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ParameterError("predictions and labels differ in length");
  if (labels.empty()) throw ParameterError("metrics need at least one window");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] == 1, y = labels[i] == 1;
    if (y && p) ++c.tp;
    else if (y) ++c.fn;
    else if (p) ++c.fp;
    else ++c.tn;
  }
  return c;
}

inline Metrics metrics_from(const Confusion& c) {
  Metrics m;
  m.confusion = c;
  m.accuracy = 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.positives() > 0) m.sensitivity = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.positives());
  if (c.negatives() > 0) m.specificity = 100.0 * static_cast<double>(c.tn) / static_cast<double>(c.negatives());

  auto f1 = [](std::size_t hit, std::size_t miss_a, std::size_t miss_b) -> std::optional<double> {
    const std::size_t denom = 2 * hit + miss_a + miss_b;
    if (denom == 0) return std::nullopt;
    return 100.0 * static_cast<double>(2 * hit) / static_cast<double>(denom);
  };
  const auto f1_pos = f1(c.tp, c.fp, c.fn);
  const auto f1_neg = f1(c.tn, c.fn, c.fp);
  if (f1_pos && f1_neg) m.macro_f1 = (*f1_pos + *f1_neg) / 2.0;
  else if (f1_pos) m.macro_f1 = f1_pos;
  else if (f1_neg) m.macro_f1 = f1_neg;
  return m;
}

inline Metrics compute_metrics(std::span<const int> predictions, std::span<const int> labels) {
  return metrics_from(confusion_matrix(predictions, labels));
}

/// Rounds to the 2-decimal reporting precision.
inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation
  std::size_t count = 0;
};

inline MeanStd mean_std(std::span<const double> xs) {
  if (xs.size() < 2) throw ParameterError("aggregation needs at least 2 folds");
  MeanStd r;
  r.count = xs.size();
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  return r;
}

struct AggregateMetrics {
  MeanStd accuracy;
  std::optional<MeanStd> macro_f1;
  std::optional<MeanStd> sensitivity;
  std::optional<MeanStd> specificity;
};

/// Mean and sample std per metric across folds; a metric undefined in any
/// fold is aggregated over the folds where it is defined (if at least two).
inline AggregateMetrics aggregate_folds(std::span<const Metrics> folds) {
  if (folds.size() < 2) throw ParameterError("aggregation needs at least 2 folds");
  AggregateMetrics a;
  std::vector<double> acc;
  for (const auto& m : folds) acc.push_back(m.accuracy);
  a.accuracy = mean_std(acc);
  auto collect = [&](auto member) -> std::optional<MeanStd> {
    std::vector<double> xs;
    for (const auto& m : folds)
      if ((m.*member).has_value()) xs.push_back(*(m.*member));
    if (xs.size() < 2) return std::nullopt;
    return mean_std(xs);
  };
  a.macro_f1 = collect(&Metrics::macro_f1);
  a.sensitivity = collect(&Metrics::sensitivity);
  a.specificity = collect(&Metrics::specificity);
  return a;
}

// ---------------------------------------------------------------------------
// AHI

/// Apneic windows per hour, where W overlapping 60 s windows span 30 W + 30 s.
inline double windows_per_hour(std::size_t apneic, std::size_t windows) {
  if (windows == 0) throw ParameterError("AHI needs at least one window");
  return static_cast<double>(apneic) / (30.0 * static_cast<double>(windows) + 30.0) * 3600.0;
}

inline double sahi(std::span<const int> labels) {
  const auto apneic = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  return windows_per_hour(apneic, labels.size());
}

inline double pahi(std::span<const int> predictions) { return sahi(predictions); }

/// Product-moment correlation; empty when either series has zero variance.
inline std::optional<double> pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ParameterError("pearson inputs differ in length");
  if (xs.size() < 2) throw ParameterError("pearson needs at least 2 points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

enum class Severity { normal, mild, moderate, severe };

inline std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::normal: return "normal";
    case Severity::mild: return "mild";
    case Severity::moderate: return "moderate";
    case Severity::severe: return "severe";
  }
  return "unknown";
}

/// Clinical bands: < 5 normal, < 15 mild, < 30 moderate, else severe.
inline Severity severity(double ahi) {
  if (!(ahi >= 0.0)) throw ParameterError("AHI must be non-negative");
  if (ahi < 5.0) return Severity::normal;
  if (ahi < 15.0) return Severity::mild;
  if (ahi < 30.0) return Severity::moderate;
  return Severity::severe;
}

struct SubjectSummary {
  std::string subject_id;
  std::size_t fold = 0;
  std::optional<double> ahi_reference;
  std::size_t windows = 0;
  double sahi = 0.0;
  double pahi = 0.0;
  Severity severity = Severity::normal;  // of the reference AHI when known, else of sAHI
};

}  // namespace apsense
