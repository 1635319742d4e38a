#pragma once

// End-to-end orchestration: per-subject window preparation, nested
// subject-independent cross-validation with k-NN over flattened standardized
// features, and the JSON report.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "apsense/balancing.hpp"
#include "apsense/evaluation.hpp"
#include "apsense/knn_classifier.hpp"
#include "apsense/parallel.hpp"
#include "apsense/preprocess.hpp"
#include "apsense/pulse_features.hpp"
#include "apsense/signal_io.hpp"
#include "apsense/windowing.hpp"

namespace apsense {

struct PipelineConfig {
  PreprocessConfig preprocess;
  std::size_t min_separation = 30;
  RejectionConfig rejection;
  AugmentationConfig augmentation;
  std::size_t k = 5;
  std::size_t jobs = 0;  // 0 = hardware concurrency
};

// ---------------------------------------------------------------------------
// Config (JSON). Unknown keys are errors so typos do not pass silently.

inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig cfg = {}) {
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  auto num = [](const nlohmann::json& v, const std::string& key) {
    if (!v.is_number()) throw FormatError("config key `" + key + "` must be a number");
    return v.get<double>();
  };
  auto count = [&](const nlohmann::json& v, const std::string& key) {
    const double d = num(v, key);
    if (d < 0 || d != std::floor(d)) throw FormatError("config key `" + key + "` must be a non-negative integer");
    return static_cast<std::size_t>(d);
  };
  for (const auto& [key, v] : j.items()) {
    if (key == "hp_cutoff_hz") cfg.preprocess.hp_cutoff_hz = num(v, key);
    else if (key == "hp_atten_db") cfg.preprocess.hp_atten_db = num(v, key);
    else if (key == "ma_width") cfg.preprocess.ma_width = count(v, key);
    else if (key == "min_separation") cfg.min_separation = count(v, key);
    else if (key == "min_pulses") cfg.rejection.min_pulses = count(v, key);
    else if (key == "ppi_min_s") cfg.rejection.ppi_min_s = num(v, key);
    else if (key == "ppi_max_s") cfg.rejection.ppi_max_s = num(v, key);
    else if (key == "max_bad_ppi_frac") cfg.rejection.max_bad_ppi_frac = num(v, key);
    else if (key == "k") cfg.k = count(v, key);
    else if (key == "augmentation") {
      if (!v.is_object()) throw FormatError("config key `augmentation` must be an object");
      auto& a = cfg.augmentation;
      for (const auto& [ak, av] : v.items()) {
        if (ak == "jitter_sigma_frac") a.jitter_sigma_frac = num(av, ak);
        else if (ak == "scale_sigma") a.scale_sigma = num(av, ak);
        else if (ak == "magw_sigma") a.magw_sigma = num(av, ak);
        else if (ak == "magw_knots") a.magw_knots = count(av, ak);
        else if (ak == "timew_sigma") a.timew_sigma = num(av, ak);
        else if (ak == "timew_knots") a.timew_knots = count(av, ak);
        else if (ak == "perm_chunks") a.perm_chunks = count(av, ak);
        else throw FormatError("unknown augmentation key `" + ak + "`");
      }
    } else {
      throw FormatError("unknown config key `" + key + "`");
    }
  }
  if (cfg.k % 2 == 0) throw ParameterError("k must be odd");
  return cfg;
}

inline nlohmann::ordered_json config_to_json(const PipelineConfig& cfg) {
  const auto& a = cfg.augmentation;
  return {{"hp_cutoff_hz", cfg.preprocess.hp_cutoff_hz},
          {"hp_atten_db", cfg.preprocess.hp_atten_db},
          {"ma_width", cfg.preprocess.ma_width},
          {"min_separation", cfg.min_separation},
          {"min_pulses", cfg.rejection.min_pulses},
          {"ppi_min_s", cfg.rejection.ppi_min_s},
          {"ppi_max_s", cfg.rejection.ppi_max_s},
          {"max_bad_ppi_frac", cfg.rejection.max_bad_ppi_frac},
          {"k", cfg.k},
          {"augmentation",
           {{"jitter_sigma_frac", a.jitter_sigma_frac},
            {"scale_sigma", a.scale_sigma},
            {"magw_sigma", a.magw_sigma},
            {"magw_knots", a.magw_knots},
            {"timew_sigma", a.timew_sigma},
            {"timew_knots", a.timew_knots},
            {"perm_chunks", a.perm_chunks}}}};
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline PipelineConfig load_config(const std::filesystem::path& path, PipelineConfig base = {}) {
  return config_from_json(read_json_file(path), base);
}

// ---------------------------------------------------------------------------
// Split plan (JSON)

inline nlohmann::ordered_json plan_to_json(const SplitPlan& plan) {
  nlohmann::ordered_json j;
  j["seed"] = plan.seed;
  j["subjects"] = nlohmann::ordered_json::array();
  for (const auto& s : plan.subjects) j["subjects"].push_back({{"subject_id", s.subject_id}, {"ahi", s.ahi}});
  j["outer_folds"] = nlohmann::ordered_json::array();
  for (const auto& f : plan.outer)
    j["outer_folds"].push_back({{"development", f.development}, {"test", f.test}, {"inner_seed", f.inner_seed}});
  return j;
}

inline SplitPlan plan_from_json(const nlohmann::json& j) {
  try {
    SplitPlan plan;
    plan.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("subjects"))
      plan.subjects.push_back({s.at("subject_id").get<std::string>(), s.at("ahi").get<double>()});
    for (const auto& f : j.at("outer_folds"))
      plan.outer.push_back({f.at("development").get<std::vector<std::string>>(),
                            f.at("test").get<std::vector<std::string>>(), f.at("inner_seed").get<std::uint64_t>()});
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid split plan: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Subject preparation

struct PreparedWindow {
  std::size_t index = 0;
  double start_s = 0.0;
  std::size_t start_sample = 0;
  int label = 0;
  RejectDecision decision;
  std::optional<FeatureMatrix> features;  // set for retained windows
};

struct PreparedSubject {
  PpgRecord record;
  std::vector<PreparedWindow> windows;

  std::span<const double> raw(const PreparedWindow& w) const {
    return std::span<const double>(record.samples).subspan(w.start_sample, window_sample_count(record.fs));
  }
  std::vector<const PreparedWindow*> retained() const {
    std::vector<const PreparedWindow*> out;
    for (const auto& w : windows)
      if (!w.decision.rejected) out.push_back(&w);
    return out;
  }
};

/// Features of a raw window or the reason it is unusable.
struct WindowFeatures {
  RejectDecision decision;
  std::optional<FeatureMatrix> features;
};

inline WindowFeatures window_features(std::span<const double> raw, double fs, const PipelineConfig& cfg) {
  WindowFeatures out;
  const auto s = screen(raw, fs, cfg.preprocess, cfg.min_separation, cfg.rejection);
  out.decision = s.decision;
  if (s.decision.rejected) return out;
  try {
    out.features = to_matrix(compute_features(s.filtered, fs, *s.landmarks));
  } catch (const InsufficientPulses&) {
    out.decision = {true, RejectReason::too_few_pulses};
  }
  return out;
}

inline PreparedSubject prepare_subject(PpgRecord record, std::span<const ApneaEvent> events,
                                       const PipelineConfig& cfg, std::size_t jobs = 1) {
  PreparedSubject subject;
  const auto windows = segment(record);
  subject.record = std::move(record);
  subject.windows.resize(windows.size());
  parallel_for(windows.size(), jobs, [&](std::size_t i) {
    auto& pw = subject.windows[i];
    pw.index = windows[i].index;
    pw.start_s = windows[i].start_s;
    pw.start_sample = windows[i].start_sample;
    pw.label = annotate(windows[i], events);
    auto wf = window_features(windows[i].samples, subject.record.fs, cfg);
    pw.decision = wf.decision;
    pw.features = std::move(wf.features);
  });
  return subject;
}

inline std::vector<double> flatten(std::span<const FeatureMatrix> ms) {
  std::vector<double> out;
  out.reserve(ms.size() * kFeatureSize);
  for (const auto& m : ms) out.insert(out.end(), m.values.begin(), m.values.end());
  return out;
}

// ---------------------------------------------------------------------------
// Nested cross-validation

struct FoldResult {
  std::size_t fold = 0;
  Metrics metrics;
  std::size_t best_inner = 0;
  double best_inner_accuracy = 0.0;  // validation accuracy, %
  std::size_t train_windows = 0;     // after balancing
  std::size_t augment_failures = 0;  // copies whose features could not be extracted
};

struct EvaluationReport {
  std::vector<FoldResult> folds;
  std::optional<AggregateMetrics> aggregate;
  std::vector<SubjectSummary> subjects;
  std::optional<double> r_sahi_pahi;
  std::optional<double> r_ahi_sahi;
};

namespace detail {

struct DevWindow {
  std::size_t subject;
  const PreparedWindow* window;
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), static_cast<std::uint32_t>(b),
                    static_cast<std::uint32_t>(b >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

struct TrainedModel {
  Standardizer standardizer;
  ReferenceSpace space;
};

inline TrainedModel train_knn(std::span<const FeatureMatrix> features, std::span<const int> labels) {
  TrainedModel m{Standardizer::fit(features), {}};
  std::vector<FeatureMatrix> z;
  z.reserve(features.size());
  for (const auto& f : features) z.push_back(m.standardizer.apply(f));
  m.space = ReferenceSpace::build(flatten(z), kFeatureSize, std::vector<int>(labels.begin(), labels.end()));
  return m;
}

inline std::vector<int> predict_all(const TrainedModel& m, std::span<const FeatureMatrix* const> queries,
                                    std::size_t k, std::size_t jobs) {
  std::vector<int> out(queries.size());
  parallel_for(queries.size(), jobs, [&](std::size_t i) {
    const auto z = m.standardizer.apply(*queries[i]);
    out[i] = m.space.predict(z.values, k);
  });
  return out;
}

inline void summarize(EvaluationReport& report) {
  std::vector<Metrics> ms;
  for (const auto& f : report.folds) ms.push_back(f.metrics);
  if (ms.size() >= 2) report.aggregate = aggregate_folds(ms);
  std::vector<double> s, p, a, sa;
  for (const auto& row : report.subjects) {
    s.push_back(row.sahi);
    p.push_back(row.pahi);
    if (row.ahi_reference) {
      a.push_back(*row.ahi_reference);
      sa.push_back(row.sahi);
    }
  }
  if (s.size() >= 2) report.r_sahi_pahi = pearson(s, p);
  if (a.size() >= 2) report.r_ahi_sahi = pearson(a, sa);
}

}  // namespace detail

/// Runs every outer fold of `plan`: balance and featurize the development
/// windows, pick the inner fold whose k-NN model scores best on its
/// validation split, and score that model on the test subjects.
inline EvaluationReport run_evaluation(std::span<const PreparedSubject> subjects, const SplitPlan& plan,
                                       const PipelineConfig& cfg) {
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < subjects.size(); ++i) by_id[subjects[i].record.subject_id] = i;
  auto lookup = [&](const std::string& id) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("split plan names unknown subject " + id);
    return it->second;
  };

  EvaluationReport report;
  for (std::size_t f = 0; f < plan.outer.size(); ++f) {
    const auto& fold = plan.outer[f];
    std::vector<detail::DevWindow> dev;
    for (const auto& id : fold.development) {
      const std::size_t s = lookup(id);
      for (const auto* w : subjects[s].retained()) dev.push_back({s, w});
    }
    std::vector<int> dev_labels;
    for (const auto& d : dev) dev_labels.push_back(d.window->label);
    if (std::count(dev_labels.begin(), dev_labels.end(), 1) == 0)
      throw DataError("fold " + std::to_string(f) + " has no positive development windows");

    // One augmented copy per positive development window, reused by every
    // inner fold whose training split contains the source.
    const std::uint64_t aug_seed = detail::mix_seed(fold.inner_seed, 0xa5a5);
    std::vector<std::size_t> positive_ids;
    for (std::size_t i = 0; i < dev.size(); ++i)
      if (dev_labels[i] == 1) positive_ids.push_back(i);
    std::vector<std::optional<FeatureMatrix>> copy_features(dev.size());
    parallel_for(positive_ids.size(), cfg.jobs, [&](std::size_t p) {
      const std::size_t i = positive_ids[p];
      const auto& subj = subjects[dev[i].subject];
      const auto copy = augment_copy(subj.raw(*dev[i].window), aug_seed, i, cfg.augmentation);
      copy_features[i] = window_features(copy.samples, subj.record.fs, cfg).features;
    });

    const auto assignment = inner_folds(dev_labels, fold.inner_seed);
    FoldResult result;
    result.fold = f;
    std::optional<detail::TrainedModel> best;
    for (std::size_t j = 0; j < kInnerFolds; ++j) {
      std::vector<FeatureMatrix> train;
      std::vector<int> train_labels;
      std::vector<const FeatureMatrix*> val;
      std::vector<int> val_labels;
      std::size_t failures = 0;
      for (std::size_t i = 0; i < dev.size(); ++i) {
        if (assignment[i] == j) {
          val.push_back(&*dev[i].window->features);
          val_labels.push_back(dev_labels[i]);
          continue;
        }
        train.push_back(*dev[i].window->features);
        train_labels.push_back(dev_labels[i]);
      }
      for (std::size_t i = 0; i < dev.size(); ++i) {
        if (assignment[i] == j || dev_labels[i] != 1) continue;
        if (!copy_features[i]) {
          ++failures;
          continue;
        }
        train.push_back(*copy_features[i]);
        train_labels.push_back(1);
      }
      const auto keep = undersample_indices(train_labels, detail::mix_seed(fold.inner_seed, j));
      std::vector<FeatureMatrix> bal;
      std::vector<int> bal_labels;
      for (std::size_t i : keep) {
        bal.push_back(train[i]);
        bal_labels.push_back(train_labels[i]);
      }
      auto model = detail::train_knn(bal, bal_labels);
      const auto pred = detail::predict_all(model, val, cfg.k, cfg.jobs);
      const double acc = compute_metrics(pred, val_labels).accuracy;
      if (!best || acc > result.best_inner_accuracy) {
        best = std::move(model);
        result.best_inner = j;
        result.best_inner_accuracy = acc;
        result.train_windows = bal.size();
        result.augment_failures = failures;
      }
    }

    std::vector<int> all_pred, all_labels;
    for (const auto& id : fold.test) {
      const std::size_t s = lookup(id);
      const auto kept = subjects[s].retained();
      if (kept.empty()) continue;
      std::vector<const FeatureMatrix*> queries;
      std::vector<int> labels;
      for (const auto* w : kept) {
        queries.push_back(&*w->features);
        labels.push_back(w->label);
      }
      const auto pred = detail::predict_all(*best, queries, cfg.k, cfg.jobs);
      all_pred.insert(all_pred.end(), pred.begin(), pred.end());
      all_labels.insert(all_labels.end(), labels.begin(), labels.end());

      SubjectSummary row;
      row.subject_id = id;
      row.fold = f;
      row.ahi_reference = subjects[s].record.ahi_reference;
      row.windows = labels.size();
      row.sahi = sahi(labels);
      row.pahi = pahi(pred);
      row.severity = severity(row.ahi_reference.value_or(row.sahi));
      report.subjects.push_back(std::move(row));
    }
    if (all_labels.empty()) throw DataError("fold " + std::to_string(f) + " has no retained test windows");
    result.metrics = compute_metrics(all_pred, all_labels);
    report.folds.push_back(std::move(result));
  }
  detail::summarize(report);
  return report;
}

/// Scores externally produced per-window predictions against labels.
/// `labels` / `predictions` map subject id -> per-window values; predictions
/// are looked up per fold first (key "<id>#<fold>"), then per subject.
inline EvaluationReport evaluate_predictions(const SplitPlan& plan, const std::map<std::string, std::vector<int>>& labels,
                                             const std::map<std::string, std::vector<int>>& predictions) {
  std::map<std::string, double> ahi;
  for (const auto& s : plan.subjects) ahi[s.subject_id] = s.ahi;
  EvaluationReport report;
  for (std::size_t f = 0; f < plan.outer.size(); ++f) {
    std::vector<int> all_pred, all_labels;
    for (const auto& id : plan.outer[f].test) {
      auto lit = labels.find(id);
      if (lit == labels.end()) throw DataError("no labels for subject " + id);
      auto pit = predictions.find(id + "#" + std::to_string(f));
      if (pit == predictions.end()) pit = predictions.find(id);
      if (pit == predictions.end()) throw DataError("no predictions for subject " + id);
      if (pit->second.size() != lit->second.size())
        throw DataError("subject " + id + ": " + std::to_string(pit->second.size()) + " predictions for " +
                        std::to_string(lit->second.size()) + " windows");
      if (lit->second.empty()) continue;
      all_pred.insert(all_pred.end(), pit->second.begin(), pit->second.end());
      all_labels.insert(all_labels.end(), lit->second.begin(), lit->second.end());
      SubjectSummary row;
      row.subject_id = id;
      row.fold = f;
      if (auto a = ahi.find(id); a != ahi.end()) row.ahi_reference = a->second;
      row.windows = lit->second.size();
      row.sahi = sahi(lit->second);
      row.pahi = pahi(pit->second);
      row.severity = severity(row.ahi_reference.value_or(row.sahi));
      report.subjects.push_back(std::move(row));
    }
    if (all_labels.empty()) throw DataError("fold " + std::to_string(f) + " has no test windows");
    report.folds.push_back({f, compute_metrics(all_pred, all_labels)});
  }
  detail::summarize(report);
  return report;
}

// ---------------------------------------------------------------------------
// Report (JSON, values rounded to 2 decimals)

namespace detail {

inline nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(round2(*v)) : nlohmann::ordered_json(nullptr);
}

inline nlohmann::ordered_json metrics_json(const Metrics& m) {
  return {{"accuracy", round2(m.accuracy)},
          {"macro_f1", opt_json(m.macro_f1)},
          {"sensitivity", opt_json(m.sensitivity)},
          {"specificity", opt_json(m.specificity)},
          {"confusion", {{"tp", m.confusion.tp}, {"fn", m.confusion.fn}, {"tn", m.confusion.tn}, {"fp", m.confusion.fp}}}};
}

inline nlohmann::ordered_json mean_std_json(const std::optional<MeanStd>& v) {
  if (!v) return nullptr;
  return {{"mean", round2(v->mean)}, {"std", round2(v->std)}};
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["folds"] = nlohmann::ordered_json::array();
  for (const auto& f : r.folds) {
    auto fj = detail::metrics_json(f.metrics);
    fj = {{"fold", f.fold}, {"metrics", fj}};
    if (f.train_windows > 0) {
      fj["best_inner_fold"] = f.best_inner;
      fj["best_inner_val_accuracy"] = round2(f.best_inner_accuracy);
      fj["train_windows"] = f.train_windows;
      fj["augment_failures"] = f.augment_failures;
    }
    j["folds"].push_back(fj);
  }
  if (r.aggregate) {
    j["aggregate"] = {{"accuracy", detail::mean_std_json(r.aggregate->accuracy)},
                      {"macro_f1", detail::mean_std_json(r.aggregate->macro_f1)},
                      {"sensitivity", detail::mean_std_json(r.aggregate->sensitivity)},
                      {"specificity", detail::mean_std_json(r.aggregate->specificity)}};
  } else {
    j["aggregate"] = nullptr;
  }
  j["subjects"] = nlohmann::ordered_json::array();
  for (const auto& s : r.subjects) {
    j["subjects"].push_back({{"subject_id", s.subject_id},
                             {"fold", s.fold},
                             {"ahi_reference", detail::opt_json(s.ahi_reference)},
                             {"windows", s.windows},
                             {"sahi", round2(s.sahi)},
                             {"pahi", round2(s.pahi)},
                             {"severity", std::string(to_string(s.severity))}});
  }
  j["pearson"] = {{"sahi_pahi", r.r_sahi_pahi ? nlohmann::ordered_json(std::round(*r.r_sahi_pahi * 1e4) / 1e4)
                                               : nlohmann::ordered_json(nullptr)},
                  {"ahi_sahi", r.r_ahi_sahi ? nlohmann::ordered_json(std::round(*r.r_ahi_sahi * 1e4) / 1e4)
                                             : nlohmann::ordered_json(nullptr)}};
  return j;
}

/// Scatter rows for external plotting: fold,subject_id,ahi_reference,sahi,pahi.
inline void write_scatter_csv(const std::filesystem::path& path, const EvaluationReport& r) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "fold,subject_id,ahi_reference,sahi,pahi\n";
  for (const auto& s : r.subjects) {
    out << s.fold << ',' << s.subject_id << ','
        << (s.ahi_reference ? apsense::detail::format_double(*s.ahi_reference) : std::string()) << ','
        << apsense::detail::format_double(s.sahi) << ',' << apsense::detail::format_double(s.pahi) << '\n';
  }
}

}  // namespace apsense
