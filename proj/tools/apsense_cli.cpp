// apsense: command-line front end for the PPG apnea toolkit.
//
// Exit status: 0 success, 1 data/format/parameter error, 2 usage error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "apsense/apsense.hpp"

namespace fs = std::filesystem;
using namespace apsense;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<double> hp_cutoff;
  std::optional<double> hp_atten;
  std::optional<std::size_t> ma_width;
  std::optional<std::size_t> k;
  std::size_t jobs = 0;
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_k = false) {
  cmd->add_option("--config", o.config, "JSON file overriding pipeline defaults")->check(CLI::ExistingFile);
  cmd->add_option("--hp-cutoff", o.hp_cutoff, "high-pass cutoff in Hz");
  cmd->add_option("--hp-atten", o.hp_atten, "high-pass stopband attenuation in dB");
  cmd->add_option("--ma-width", o.ma_width, "moving-average width in samples");
  cmd->add_option("--jobs", o.jobs, "worker threads (0 = all cores)");
  if (with_k) cmd->add_option("--k", o.k, "neighbours for the majority vote (odd)");
}

PipelineConfig resolve(const CommonOptions& o) {
  PipelineConfig cfg;
  if (!o.config.empty()) cfg = load_config(o.config, cfg);
  if (o.hp_cutoff) cfg.preprocess.hp_cutoff_hz = *o.hp_cutoff;
  if (o.hp_atten) cfg.preprocess.hp_atten_db = *o.hp_atten;
  if (o.ma_width) cfg.preprocess.ma_width = *o.ma_width;
  if (o.k) cfg.k = *o.k;
  if (cfg.k % 2 == 0) throw ParameterError("k must be odd");
  cfg.jobs = o.jobs;
  return cfg;
}

struct LoadedRecord {
  PpgRecord record;
  std::vector<ApneaEvent> events;
};

LoadedRecord load(const fs::path& path, const std::string& events_override = {}) {
  LoadedRecord r;
  r.record = read_record(path);
  const fs::path ev = events_override.empty() ? events_path(path) : fs::path(events_override);
  if (fs::exists(ev)) {
    auto set = read_annotations(ev);
    if (set.skipped > 0)
      std::cerr << "warning: " << ev.string() << ": skipped " << set.skipped << " rows of unknown event type\n";
    check_events_within(set.events, r.record.duration_s());
    r.events = std::move(set.events);
  } else if (!events_override.empty()) {
    throw FormatError("missing events file " + ev.string());
  }
  return r;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << text;
}

std::vector<float> to_floats(std::span<const int> xs) { return {xs.begin(), xs.end()}; }

std::vector<int> to_labels(const Tensor& t, const std::string& what) {
  if (t.dims.size() != 1) throw DataError(what + " must be a rank-1 tensor");
  std::vector<int> out;
  for (float v : t.values) {
    if (v != 0.0f && v != 1.0f) throw DataError(what + " must hold only 0 and 1");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct SynthOptions {
  std::string out_dir = ".";
  std::string subject = "synth";
  double duration = 3600.0;
  double fs = 256.0;
  double hr = 70.0;
  double events_per_hour = 12.0;
  double drop = 0.5;
  double noise = 0.0;
  std::uint64_t seed = 0;
};

int run_synth(const SynthOptions& o) {
  SynthConfig cfg;
  cfg.subject_id = o.subject;
  cfg.duration_s = o.duration;
  cfg.fs = o.fs;
  cfg.hr_bpm = o.hr;
  cfg.apnea_events_per_hour = o.events_per_hour;
  cfg.pwa_drop_frac = o.drop;
  cfg.noise_sigma = o.noise;
  cfg.seed = o.seed;
  const auto syn = generate(cfg);
  fs::create_directories(o.out_dir);
  const fs::path rec = fs::path(o.out_dir) / (o.subject + ".ppg.csv");
  write_record(rec, syn.record);
  write_annotations(events_path(rec), syn.events);
  std::cout << rec.string() << ": " << syn.record.samples.size() << " samples, " << syn.events.size()
            << " events\n";
  return 0;
}

struct SegmentOptions {
  std::string record, events, out;
  CommonOptions common;
};

int run_segment(const SegmentOptions& o) {
  const auto cfg = resolve(o.common);
  const auto r = load(o.record, o.events);
  const auto subject = prepare_subject(r.record, r.events, cfg, cfg.jobs);
  nlohmann::ordered_json j;
  j["subject_id"] = subject.record.subject_id;
  j["fs_hz"] = subject.record.fs;
  j["duration_s"] = subject.record.duration_s();
  j["windows"] = nlohmann::ordered_json::array();
  std::size_t rejected = 0;
  for (const auto& w : subject.windows) {
    rejected += w.decision.rejected ? 1 : 0;
    j["windows"].push_back({{"index", w.index},
                            {"start_s", w.start_s},
                            {"label", w.label},
                            {"rejected", w.decision.rejected},
                            {"reason", std::string(to_string(w.decision.reason))}});
  }
  j["rejected"] = rejected;
  write_text(o.out, j.dump(2) + "\n");
  if (!o.out.empty() && o.out != "-")
    std::cout << subject.windows.size() << " windows, " << rejected << " rejected\n";
  return 0;
}

struct AhiOptions {
  std::string windows, predictions;
  bool retained_only = false;
};

int run_ahi(const AhiOptions& o) {
  const auto j = read_json_file(o.windows);
  std::vector<int> labels;
  try {
    for (const auto& w : j.at("windows"))
      if (!o.retained_only || !w.at("rejected").get<bool>()) labels.push_back(w.at("label").get<int>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(o.windows + ": " + e.what());
  }
  if (labels.empty()) throw DataError("no windows to score");
  nlohmann::ordered_json out;
  out["subject_id"] = j.value("subject_id", "");
  out["windows"] = labels.size();
  out["apneic_windows"] = std::count(labels.begin(), labels.end(), 1);
  out["sahi"] = round2(sahi(labels));
  if (!o.predictions.empty()) {
    const auto pred = to_labels(read_tensor(o.predictions), "predictions");
    if (pred.size() != labels.size())
      throw DataError("predictions hold " + std::to_string(pred.size()) + " values for " +
                      std::to_string(labels.size()) + " windows");
    out["pahi"] = round2(pahi(pred));
  }
  const double ahi = out.contains("pahi") ? out["pahi"].get<double>() : out["sahi"].get<double>();
  out["severity"] = std::string(to_string(severity(ahi)));
  std::cout << out.dump(2) << "\n";
  return 0;
}

struct ExtractOptions {
  std::vector<std::string> records;
  std::string out_dir = ".";
  CommonOptions common;
};

int run_extract(const ExtractOptions& o) {
  const auto cfg = resolve(o.common);
  fs::create_directories(o.out_dir);
  // Subjects are written in subject-id order regardless of scheduling.
  std::map<std::string, std::string> ordered;
  for (const auto& r : o.records) ordered[record_stem(r)] = r;
  for (const auto& [stem, path] : ordered) {
    const auto r = load(path);
    const auto subject = prepare_subject(r.record, r.events, cfg, cfg.jobs);
    std::vector<float> feats, labels, index;
    for (const auto* w : subject.retained()) {
      feats.insert(feats.end(), w->features->values.begin(), w->features->values.end());
      labels.push_back(static_cast<float>(w->label));
      index.push_back(static_cast<float>(w->index));
    }
    const std::uint64_t n = labels.size();
    const std::string id = subject.record.subject_id;
    write_tensor(fs::path(o.out_dir) / (id + ".features.apsn"),
                 std::vector<std::uint64_t>{n, kFeatureCount, kFeatureLength}, feats);
    write_tensor(fs::path(o.out_dir) / (id + ".labels.apsn"), std::vector<std::uint64_t>{n}, labels);
    write_tensor(fs::path(o.out_dir) / (id + ".index.apsn"), std::vector<std::uint64_t>{n}, index);
    std::cout << id << ": " << n << " of " << subject.windows.size() << " windows retained\n";
  }
  return 0;
}

struct BalanceOptions {
  std::vector<std::string> records;
  std::string out_dir = ".";
  std::string aug_config;
  std::uint64_t seed = 0;
  CommonOptions common;
};

int run_balance(const BalanceOptions& o) {
  auto cfg = resolve(o.common);
  if (!o.aug_config.empty()) cfg = config_from_json({{"augmentation", read_json_file(o.aug_config)}}, cfg);
  std::map<std::string, std::string> ordered;
  for (const auto& r : o.records) ordered[record_stem(r)] = r;

  std::vector<std::vector<double>> windows;
  std::vector<int> labels;
  std::optional<double> rate;
  for (const auto& [stem, path] : ordered) {
    const auto r = load(path);
    if (rate && *rate != r.record.fs) throw DataError("records differ in sampling rate");
    rate = r.record.fs;
    const auto subject = prepare_subject(r.record, r.events, cfg, cfg.jobs);
    for (const auto* w : subject.retained()) {
      const auto raw = subject.raw(*w);
      windows.emplace_back(raw.begin(), raw.end());
      labels.push_back(w->label);
    }
  }
  if (!rate) throw DataError("no records");
  const auto augmented = augment_minority(windows, labels, o.seed, cfg.augmentation);

  // Copies whose features cannot be extracted are dropped before undersampling.
  std::vector<std::optional<FeatureMatrix>> feats(augmented.windows.size());
  parallel_for(augmented.windows.size(), cfg.jobs, [&](std::size_t i) {
    feats[i] = window_features(augmented.windows[i], *rate, cfg).features;
  });
  LabeledSet usable;
  std::vector<FeatureMatrix> usable_feats;
  std::size_t dropped = 0;
  for (std::size_t i = 0; i < augmented.windows.size(); ++i) {
    if (!feats[i]) {
      ++dropped;
      continue;
    }
    usable.windows.push_back(augmented.windows[i]);
    usable.labels.push_back(augmented.labels[i]);
    usable.origin.push_back(augmented.origin[i]);
    usable.technique.push_back(augmented.technique[i]);
    usable_feats.push_back(*feats[i]);
  }
  const auto keep = undersample_indices(usable.labels, o.seed);

  std::vector<float> raw_out, feat_out, label_out;
  for (std::size_t i : keep) {
    raw_out.insert(raw_out.end(), usable.windows[i].begin(), usable.windows[i].end());
    feat_out.insert(feat_out.end(), usable_feats[i].values.begin(), usable_feats[i].values.end());
    label_out.push_back(static_cast<float>(usable.labels[i]));
  }
  const std::uint64_t m = keep.size();
  const std::uint64_t len = window_sample_count(*rate);
  fs::create_directories(o.out_dir);
  write_tensor(fs::path(o.out_dir) / "balanced.windows.apsn", std::vector<std::uint64_t>{m, len}, raw_out);
  write_tensor(fs::path(o.out_dir) / "balanced.features.apsn",
               std::vector<std::uint64_t>{m, kFeatureCount, kFeatureLength}, feat_out);
  write_tensor(fs::path(o.out_dir) / "balanced.labels.apsn", std::vector<std::uint64_t>{m}, label_out);
  const auto pos = std::count(label_out.begin(), label_out.end(), 1.0f);
  std::cout << m << " windows (" << pos << " positive, " << (static_cast<long>(m) - pos) << " negative)";
  if (dropped > 0) std::cout << ", " << dropped << " dropped without usable features";
  std::cout << "\n";
  return 0;
}

struct SplitOptions {
  std::vector<std::string> records;
  std::string out;
  std::uint64_t seed = 0;
};

double subject_ahi(const fs::path& path) {
  const auto r = load(path);
  if (r.record.ahi_reference) return *r.record.ahi_reference;
  // No reference AHI: fall back to the window-label estimate.
  std::vector<int> labels;
  for (const auto& w : segment(r.record)) labels.push_back(annotate(w, r.events));
  if (labels.empty()) throw DataError(path.string() + ": recording shorter than one window");
  return sahi(labels);
}

int run_split(const SplitOptions& o) {
  std::vector<SubjectStratum> subjects;
  for (const auto& r : o.records) subjects.push_back({read_record(r).subject_id, subject_ahi(r)});
  std::sort(subjects.begin(), subjects.end(),
            [](const auto& a, const auto& b) { return a.subject_id < b.subject_id; });
  write_text(o.out, plan_to_json(make_splits(subjects, o.seed)).dump(2) + "\n");
  return 0;
}

struct KnnBuildOptions {
  std::string vectors, labels, out_dir;
};

ReferenceSpace load_reference(const fs::path& vectors, const fs::path& labels) {
  const auto v = read_tensor(vectors);
  const auto l = read_tensor(labels);
  if (v.dims.empty() || v.dims[0] == 0) throw DataError("reference vectors are empty");
  const std::uint64_t m = v.dims[0];
  const std::uint64_t dim = v.element_count() / m;
  return ReferenceSpace::build(std::vector<double>(v.values.begin(), v.values.end()), dim,
                               to_labels(l, "reference labels"));
}

int run_knn_build(const KnnBuildOptions& o) {
  const auto space = load_reference(o.vectors, o.labels);
  fs::create_directories(o.out_dir);
  std::vector<float> vec(space.vectors().begin(), space.vectors().end());
  write_tensor(fs::path(o.out_dir) / "vectors.apsn", std::vector<std::uint64_t>{space.size(), space.dim()}, vec);
  write_tensor(fs::path(o.out_dir) / "labels.apsn", std::vector<std::uint64_t>{space.size()},
               to_floats(space.labels()));
  std::cout << "reference space: " << space.size() << " vectors of dimension " << space.dim() << "\n";
  return 0;
}

struct KnnPredictOptions {
  std::string reference, queries, out;
  std::size_t k = 5;
  std::size_t jobs = 0;
};

int run_knn_predict(const KnnPredictOptions& o) {
  if (o.k % 2 == 0) throw ParameterError("k must be odd");
  const fs::path dir(o.reference);
  const auto space = load_reference(dir / "vectors.apsn", dir / "labels.apsn");
  const auto q = read_tensor(o.queries);
  if (q.dims.empty()) throw DataError("query tensor has no dimensions");
  const std::uint64_t n = q.dims[0];
  const std::uint64_t dim = n == 0 ? space.dim() : q.element_count() / n;
  if (dim != space.dim())
    throw DataError("query dimension " + std::to_string(dim) + " does not match reference dimension " +
                    std::to_string(space.dim()));
  const std::vector<double> values(q.values.begin(), q.values.end());
  std::vector<int> pred(n);
  parallel_for(n, o.jobs, [&](std::size_t i) {
    pred[i] = space.predict(std::span<const double>(values).subspan(i * dim, dim), o.k);
  });
  write_tensor(o.out, std::vector<std::uint64_t>{n}, to_floats(pred));
  std::cout << n << " predictions written to " << o.out << "\n";
  return 0;
}

struct EvaluateOptions {
  std::vector<std::string> records;
  std::string plan, labels_dir, predictions_dir, out, scatter;
  std::optional<std::uint64_t> seed;
  CommonOptions common;
};

std::optional<Tensor> maybe_tensor(const fs::path& p) {
  if (!fs::exists(p)) return std::nullopt;
  return read_tensor(p);
}

int run_evaluate(const EvaluateOptions& o) {
  EvaluationReport report;
  if (!o.predictions_dir.empty()) {
    // Externally produced predictions scored against extracted labels.
    if (o.plan.empty() || o.labels_dir.empty())
      throw ParameterError("--predictions-dir needs --plan and --labels-dir");
    const auto plan = plan_from_json(read_json_file(o.plan));
    std::map<std::string, std::vector<int>> labels, preds;
    for (const auto& s : plan.subjects) {
      const auto l = maybe_tensor(fs::path(o.labels_dir) / (s.subject_id + ".labels.apsn"));
      if (!l) continue;
      labels[s.subject_id] = to_labels(*l, s.subject_id + " labels");
      if (auto p = maybe_tensor(fs::path(o.predictions_dir) / (s.subject_id + ".pred.apsn")))
        preds[s.subject_id] = to_labels(*p, s.subject_id + " predictions");
      for (std::size_t f = 0; f < plan.outer.size(); ++f) {
        const auto name = s.subject_id + ".fold" + std::to_string(f) + ".pred.apsn";
        if (auto p = maybe_tensor(fs::path(o.predictions_dir) / name))
          preds[s.subject_id + "#" + std::to_string(f)] = to_labels(*p, name);
      }
    }
    report = evaluate_predictions(plan, labels, preds);
  } else {
    if (o.records.empty()) throw ParameterError("evaluate needs --records or --predictions-dir");
    const auto cfg = resolve(o.common);
    std::map<std::string, std::string> ordered;
    for (const auto& r : o.records) ordered[record_stem(r)] = r;
    std::vector<PreparedSubject> subjects;
    std::vector<SubjectStratum> strata;
    for (const auto& [stem, path] : ordered) {
      const auto r = load(path);
      subjects.push_back(prepare_subject(r.record, r.events, cfg, cfg.jobs));
      strata.push_back({r.record.subject_id, subject_ahi(path)});
    }
    SplitPlan plan;
    if (!o.plan.empty()) plan = plan_from_json(read_json_file(o.plan));
    else if (o.seed) plan = make_splits(strata, *o.seed);
    else throw ParameterError("evaluate needs --seed or --plan");
    report = run_evaluation(subjects, plan, cfg);
  }
  write_text(o.out, report_to_json(report).dump(2) + "\n");
  if (!o.scatter.empty()) write_scatter_csv(o.scatter, report);
  return 0;
}

struct SnrOptions {
  std::string record, out;
};

int run_snr(const SnrOptions& o) {
  const auto rec = read_record(o.record);
  std::string csv = "index,start_s,snr_db\n";
  for (const auto& w : segment(rec)) {
    csv += std::to_string(w.index) + "," + apsense::detail::format_double(w.start_s) + "," +
           apsense::detail::format_double(std::round(snr_db(w.samples, rec.fs) * 1000.0) / 1000.0) + "\n";
  }
  write_text(o.out, csv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PPG sleep-apnea toolkit"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic record with planted apnea events");
  c_synth->add_option("--out-dir", synth.out_dir, "output directory");
  c_synth->add_option("--subject", synth.subject, "subject id");
  c_synth->add_option("--duration", synth.duration, "seconds");
  c_synth->add_option("--fs", synth.fs, "sampling rate in Hz");
  c_synth->add_option("--hr", synth.hr, "heart rate in bpm");
  c_synth->add_option("--events-per-hour", synth.events_per_hour, "planted event rate");
  c_synth->add_option("--drop", synth.drop, "relative pulse-amplitude drop during events");
  c_synth->add_option("--noise", synth.noise, "additive Gaussian noise sigma");
  c_synth->add_option("--seed", synth.seed, "random seed")->required();

  SegmentOptions seg;
  auto* c_seg = app.add_subcommand("segment", "window, label and screen a record");
  c_seg->add_option("record", seg.record, "<subject>.ppg.csv")->required()->check(CLI::ExistingFile);
  c_seg->add_option("--events", seg.events, "events CSV (default: sibling <subject>.events.csv)");
  c_seg->add_option("-o,--out", seg.out, "windows JSON (default: stdout)");
  add_common(c_seg, seg.common);

  AhiOptions ahi;
  auto* c_ahi = app.add_subcommand("ahi", "window-based AHI from a segment report");
  c_ahi->add_option("windows", ahi.windows, "JSON written by `segment`")->required()->check(CLI::ExistingFile);
  c_ahi->add_option("--predictions", ahi.predictions, "per-window predictions tensor for pAHI");
  c_ahi->add_flag("--retained-only", ahi.retained_only, "ignore rejected windows");

  ExtractOptions ext;
  auto* c_ext = app.add_subcommand("extract", "write per-subject feature and label tensors");
  c_ext->add_option("records", ext.records, "<subject>.ppg.csv files")->required()->check(CLI::ExistingFile);
  c_ext->add_option("--out-dir", ext.out_dir, "output directory");
  add_common(c_ext, ext.common);

  BalanceOptions bal;
  auto* c_bal = app.add_subcommand("balance", "augment positives and undersample negatives");
  c_bal->add_option("records", bal.records, "<subject>.ppg.csv files")->required()->check(CLI::ExistingFile);
  c_bal->add_option("--out-dir", bal.out_dir, "output directory");
  c_bal->add_option("--aug-config", bal.aug_config, "JSON augmentation parameters")->check(CLI::ExistingFile);
  c_bal->add_option("--seed", bal.seed, "random seed")->required();
  add_common(c_bal, bal.common);

  SplitOptions split;
  auto* c_split = app.add_subcommand("split", "subject-independent split plan");
  c_split->add_option("records", split.records, "<subject>.ppg.csv files")->required()->check(CLI::ExistingFile);
  c_split->add_option("-o,--out", split.out, "plan JSON (default: stdout)");
  c_split->add_option("--seed", split.seed, "random seed")->required();

  KnnBuildOptions kb;
  auto* c_kb = app.add_subcommand("knn-build", "validate and store a reference space");
  c_kb->add_option("--vectors", kb.vectors, "[M, D] tensor")->required()->check(CLI::ExistingFile);
  c_kb->add_option("--labels", kb.labels, "[M] tensor of 0/1")->required()->check(CLI::ExistingFile);
  c_kb->add_option("--out-dir", kb.out_dir, "reference directory")->required();

  KnnPredictOptions kp;
  auto* c_kp = app.add_subcommand("knn-predict", "k-NN majority vote for query vectors");
  c_kp->add_option("--reference", kp.reference, "directory written by knn-build")
      ->required()
      ->check(CLI::ExistingDirectory);
  c_kp->add_option("--queries", kp.queries, "[N, D] tensor")->required()->check(CLI::ExistingFile);
  c_kp->add_option("-o,--out", kp.out, "[N] predictions tensor")->required();
  c_kp->add_option("--k", kp.k, "neighbours (odd)");
  c_kp->add_option("--jobs", kp.jobs, "worker threads (0 = all cores)");

  EvaluateOptions ev;
  auto* c_ev = app.add_subcommand("evaluate", "nested cross-validation report");
  c_ev->add_option("--records", ev.records, "<subject>.ppg.csv files")->check(CLI::ExistingFile);
  c_ev->add_option("--plan", ev.plan, "split plan JSON")->check(CLI::ExistingFile);
  c_ev->add_option("--seed", ev.seed, "split seed (when no --plan is given)");
  c_ev->add_option("--labels-dir", ev.labels_dir, "directory of <subject>.labels.apsn");
  c_ev->add_option("--predictions-dir", ev.predictions_dir, "directory of <subject>[.fold<k>].pred.apsn");
  c_ev->add_option("-o,--out", ev.out, "report JSON (default: stdout)");
  c_ev->add_option("--scatter", ev.scatter, "per-subject AHI CSV");
  add_common(c_ev, ev.common, true);

  SnrOptions snr;
  auto* c_snr = app.add_subcommand("snr", "per-window signal-to-noise ratio");
  c_snr->add_option("record", snr.record, "<subject>.ppg.csv")->required()->check(CLI::ExistingFile);
  c_snr->add_option("-o,--out", snr.out, "CSV (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*c_synth) return run_synth(synth);
    if (*c_seg) return run_segment(seg);
    if (*c_ahi) return run_ahi(ahi);
    if (*c_ext) return run_extract(ext);
    if (*c_bal) return run_balance(bal);
    if (*c_split) return run_split(split);
    if (*c_kb) return run_knn_build(kb);
    if (*c_kp) return run_knn_predict(kp);
    if (*c_ev) return run_evaluate(ev);
    if (*c_snr) return run_snr(snr);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
