#include <gtest/gtest.h>

#include "apsense/pipeline.hpp"
#include "apsense/synth.hpp"
#include "test_util.hpp"

using namespace apsense;

namespace {

PipelineConfig synth_config() {
  PipelineConfig cfg;
  cfg.preprocess.hp_cutoff_hz = 0.5;
  cfg.jobs = 1;
  return cfg;
}

std::vector<PreparedSubject> small_cohort(const PipelineConfig& cfg, std::vector<SubjectStratum>& strata) {
  std::vector<PreparedSubject> out;
  const double rates[] = {6, 24, 12, 30, 4, 20, 10, 28, 8, 18};
  for (int i = 0; i < 10; ++i) {
    SynthConfig sc;
    sc.subject_id = "P" + std::to_string(i);
    sc.duration_s = 900;
    sc.apnea_events_per_hour = rates[i];
    sc.noise_sigma = 0.01;
    sc.seed = 100 + static_cast<std::uint64_t>(i);
    const auto syn = generate(sc);
    strata.push_back({sc.subject_id, *syn.record.ahi_reference});
    out.push_back(prepare_subject(syn.record, syn.events, cfg));
  }
  return out;
}

}  // namespace

TEST(Config, JsonRoundTripAndOverrides) {
  PipelineConfig cfg;
  cfg.preprocess.hp_cutoff_hz = 0.5;
  cfg.k = 7;
  cfg.rejection.min_pulses = 25;
  cfg.augmentation.perm_chunks = 6;
  const auto back = config_from_json(nlohmann::json::parse(config_to_json(cfg).dump()));
  EXPECT_EQ(back.preprocess.hp_cutoff_hz, 0.5);
  EXPECT_EQ(back.k, 7u);
  EXPECT_EQ(back.rejection.min_pulses, 25u);
  EXPECT_EQ(back.augmentation.perm_chunks, 6u);
  const auto partial = config_from_json(nlohmann::json::parse(R"({"ppi_max_s": 1.5})"));
  EXPECT_EQ(partial.rejection.ppi_max_s, 1.5);
  EXPECT_EQ(partial.preprocess.hp_cutoff_hz, 20.0);
}

TEST(Config, RejectsUnknownKeysAndEvenK) {
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"hp_cutof_hz": 1})")), FormatError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"augmentation": {"sigma": 1}})")), FormatError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"k": 4})")), ParameterError);
  EXPECT_THROW(config_from_json(nlohmann::json::parse(R"({"ma_width": -3})")), FormatError);
}

TEST(Plan, JsonRoundTrip) {
  std::vector<SubjectStratum> s;
  for (int i = 0; i < 12; ++i) s.push_back({"S" + std::to_string(i), i < 6 ? 3.0 : 22.0});
  const auto plan = make_splits(s, 9);
  const auto back = plan_from_json(nlohmann::json::parse(plan_to_json(plan).dump()));
  EXPECT_EQ(back.seed, plan.seed);
  ASSERT_EQ(back.outer.size(), plan.outer.size());
  for (std::size_t f = 0; f < plan.outer.size(); ++f) {
    EXPECT_EQ(back.outer[f].development, plan.outer[f].development);
    EXPECT_EQ(back.outer[f].test, plan.outer[f].test);
    EXPECT_EQ(back.outer[f].inner_seed, plan.outer[f].inner_seed);
  }
  EXPECT_THROW(plan_from_json(nlohmann::json::parse(R"({"seed": 1})")), FormatError);
}

TEST(EvaluatePredictions, OracleScoresPerfectly) {
  std::vector<SubjectStratum> s;
  std::map<std::string, std::vector<int>> labels;
  for (int i = 0; i < 10; ++i) {
    const std::string id = "S" + std::to_string(i);
    s.push_back({id, i < 5 ? 2.0 : 40.0});
    std::vector<int> l(119, 0);
    for (int k = 0; k < 3 * i + 1; ++k) l[static_cast<std::size_t>(k * 3)] = 1;
    labels[id] = l;
  }
  const auto report = evaluate_predictions(make_splits(s, 1), labels, labels);
  for (const auto& f : report.folds) EXPECT_EQ(f.metrics.accuracy, 100.0);
  ASSERT_TRUE(report.aggregate.has_value());
  EXPECT_EQ(report.aggregate->accuracy.mean, 100.0);
  EXPECT_EQ(report.aggregate->accuracy.std, 0.0);
  for (const auto& row : report.subjects) EXPECT_EQ(row.sahi, row.pahi);
  ASSERT_TRUE(report.r_sahi_pahi.has_value());
  EXPECT_NEAR(*report.r_sahi_pahi, 1.0, 1e-12);
  const auto j = report_to_json(report);
  EXPECT_EQ(j["aggregate"]["accuracy"]["mean"].get<double>(), 100.0);
}

TEST(EvaluatePredictions, LengthMismatchIsDataError) {
  std::vector<SubjectStratum> s;
  std::map<std::string, std::vector<int>> labels, preds;
  for (int i = 0; i < 10; ++i) {
    const std::string id = "S" + std::to_string(i);
    s.push_back({id, i < 5 ? 2.0 : 40.0});
    labels[id] = std::vector<int>(10, 0);
    preds[id] = std::vector<int>(i == 3 ? 9 : 10, 0);
  }
  EXPECT_THROW(evaluate_predictions(make_splits(s, 1), labels, preds), DataError);
}

TEST(PrepareSubject, MatchesWindowing) {
  SynthConfig sc;
  sc.duration_s = 600;
  sc.apnea_events_per_hour = 30;
  sc.seed = 4;
  const auto syn = generate(sc);
  const auto p = prepare_subject(syn.record, syn.events, synth_config(), 3);
  ASSERT_EQ(p.windows.size(), 19u);
  for (const auto& w : p.windows) {
    EXPECT_EQ(w.label, annotate(w.start_s, syn.events));
    EXPECT_FALSE(w.decision.rejected) << w.index << " " << to_string(w.decision.reason);
    EXPECT_EQ(w.features.has_value(), !w.decision.rejected);
  }
}

TEST(RunEvaluation, SmallCohortIsDeterministicAndSubjectIndependent) {
  const auto cfg = synth_config();
  std::vector<SubjectStratum> strata;
  const auto subjects = small_cohort(cfg, strata);
  const auto plan = make_splits(strata, 5);
  const auto a = run_evaluation(subjects, plan, cfg);
  const auto b = run_evaluation(subjects, plan, cfg);
  EXPECT_EQ(report_to_json(a).dump(), report_to_json(b).dump());
  ASSERT_EQ(a.folds.size(), kOuterFolds);
  EXPECT_EQ(a.subjects.size(), kOuterFolds * 2);
  for (const auto& f : a.folds) {
    EXPECT_GT(f.train_windows, 0u);
    EXPECT_EQ(f.train_windows % 2, 0u);  // balanced
    EXPECT_GE(f.metrics.accuracy, 50.0);
  }
  auto parallel = cfg;
  parallel.jobs = 4;
  EXPECT_EQ(report_to_json(run_evaluation(subjects, plan, parallel)).dump(), report_to_json(a).dump());
}

TEST(RunEvaluation, UnknownSubjectInPlan) {
  const auto cfg = synth_config();
  std::vector<SubjectStratum> strata;
  const auto subjects = small_cohort(cfg, strata);
  auto plan = make_splits(strata, 5);
  plan.outer[0].test[0] = "nobody";
  EXPECT_THROW(run_evaluation(subjects, plan, cfg), DataError);
}

TEST(ScatterCsv, Rows) {
  testutil::TempDir dir;
  EvaluationReport r;
  r.subjects.push_back({"A", 0, 12.5, 119, 12.0, 9.0, Severity::mild});
  r.subjects.push_back({"B", 1, std::nullopt, 119, 3.0, 4.0, Severity::normal});
  write_scatter_csv(dir / "s.csv", r);
  EXPECT_EQ(testutil::read_file(dir / "s.csv"),
            "fold,subject_id,ahi_reference,sahi,pahi\n0,A,12.5,12,9\n1,B,,3,4\n");
}
