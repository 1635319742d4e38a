#include <gtest/gtest.h>

#include <cstdlib>
#include <string>
#include <sys/wait.h>

#include "apsense/pipeline.hpp"
#include "test_util.hpp"

using namespace apsense;
using testutil::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const TempDir& dir, const std::string& args) {
  const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(APSENSE_CLI) + " " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, testutil::read_file(out), testutil::read_file(err)};
}

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, SynthSegmentAhiReportsTwelve) {
  TempDir dir;
  ASSERT_EQ(run(dir, "synth --duration 3600 --events-per-hour 12 --seed 7 --out-dir " + q(dir.path()) +
                         " --subject s7").code, 0);
  ASSERT_EQ(run(dir, "segment " + q(dir / "s7.ppg.csv") + " -o " + q(dir / "w.json")).code, 0);
  const auto r = run(dir, "ahi " + q(dir / "w.json"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["sahi"].get<double>(), 12.0);
  EXPECT_EQ(j["windows"].get<int>(), 119);
}

TEST(Cli, UsageErrorsExitTwo) {
  TempDir dir;
  auto r = run(dir, "segment --no-such-flag x");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos) << r.err;
  EXPECT_EQ(run(dir, "synth --out-dir " + q(dir.path())).code, 2);  // --seed is mandatory
  EXPECT_EQ(run(dir, "frobnicate").code, 2);
  EXPECT_EQ(run(dir, "").code, 2);
}

TEST(Cli, KnnBuildAndPredict) {
  TempDir dir;
  std::vector<float> vec, lab;
  for (int i = 0; i < 20; ++i) {
    for (int d = 0; d < 4; ++d) vec.push_back(static_cast<float>(i < 10 ? d : 100 + d));
    lab.push_back(i < 10 ? 0.0f : 1.0f);
  }
  write_tensor(dir / "v.apsn", std::vector<std::uint64_t>{20, 4}, vec);
  write_tensor(dir / "l.apsn", std::vector<std::uint64_t>{20}, lab);
  auto r = run(dir, "knn-build --vectors " + q(dir / "v.apsn") + " --labels " + q(dir / "l.apsn") + " --out-dir " +
                        q(dir / "ref"));
  ASSERT_EQ(r.code, 0) << r.err;
  write_tensor(dir / "q.apsn", std::vector<std::uint64_t>{2, 4}, std::vector<float>{0, 1, 2, 3, 100, 101, 102, 103});
  r = run(dir, "knn-predict --reference " + q(dir / "ref") + " --queries " + q(dir / "q.apsn") + " -o " +
                   q(dir / "p.apsn"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(read_tensor(dir / "p.apsn").values, (std::vector<float>{0, 1}));

  write_tensor(dir / "bad.apsn", std::vector<std::uint64_t>{1, 3}, std::vector<float>{0, 1, 2});
  r = run(dir, "knn-predict --reference " + q(dir / "ref") + " --queries " + q(dir / "bad.apsn") + " -o " +
                   q(dir / "p2.apsn"));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("dimension"), std::string::npos) << r.err;
}

TEST(Cli, EvaluateOraclePredictions) {
  TempDir dir;
  std::string records;
  for (int i = 0; i < 10; ++i) {
    const std::string id = "c" + std::to_string(i);
    ASSERT_EQ(run(dir, "synth --duration 600 --fs 128 --events-per-hour " + std::to_string(i < 5 ? 6 : 30) +
                           " --seed " + std::to_string(i) + " --subject " + id + " --out-dir " + q(dir / "d")).code,
              0);
    records += " " + q(dir / "d" / (id + ".ppg.csv"));
  }
  auto r = run(dir, "extract --hp-cutoff 0.5 --ma-width 32 --out-dir " + q(dir / "x") + records);
  ASSERT_EQ(r.code, 0) << r.err;
  r = run(dir, "split --seed 3 -o " + q(dir / "plan.json") + records);
  ASSERT_EQ(r.code, 0) << r.err;
  // Oracle: the labels are the predictions.
  std::filesystem::create_directories(dir / "p");
  for (int i = 0; i < 10; ++i) {
    const std::string id = "c" + std::to_string(i);
    std::filesystem::copy_file(dir / "x" / (id + ".labels.apsn"), dir / "p" / (id + ".pred.apsn"));
  }
  r = run(dir, "evaluate --plan " + q(dir / "plan.json") + " --labels-dir " + q(dir / "x") + " --predictions-dir " +
                   q(dir / "p") + " -o " + q(dir / "report.json") + " --scatter " + q(dir / "scatter.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(testutil::read_file(dir / "report.json"));
  EXPECT_EQ(j["aggregate"]["accuracy"]["mean"].get<double>(), 100.0);
  EXPECT_EQ(j["pearson"]["sahi_pahi"].get<double>(), 1.0);
  EXPECT_TRUE(std::filesystem::exists(dir / "scatter.csv"));

  const auto feats = read_tensor(dir / "x" / "c0.features.apsn");
  ASSERT_EQ(feats.dims.size(), 3u);
  EXPECT_EQ(feats.dims[1], 7u);
  EXPECT_EQ(feats.dims[2], 60u);
  EXPECT_EQ(feats.dims[0], read_tensor(dir / "x" / "c0.labels.apsn").dims[0]);
}

TEST(Cli, BalanceIsDeterministic) {
  TempDir dir;
  ASSERT_EQ(run(dir, "synth --duration 900 --fs 128 --events-per-hour 24 --seed 2 --subject b --out-dir " +
                         q(dir.path())).code, 0);
  const std::string common = " --hp-cutoff 0.5 --ma-width 32 --seed 11 " + q(dir / "b.ppg.csv");
  ASSERT_EQ(run(dir, "balance --out-dir " + q(dir / "o1") + common).code, 0);
  ASSERT_EQ(run(dir, "balance --out-dir " + q(dir / "o2") + common).code, 0);
  for (const char* f : {"balanced.windows.apsn", "balanced.features.apsn", "balanced.labels.apsn"})
    EXPECT_EQ(testutil::read_file(dir / "o1" / f), testutil::read_file(dir / "o2" / f)) << f;
  const auto labels = read_tensor(dir / "o1" / "balanced.labels.apsn").values;
  const auto pos = std::count(labels.begin(), labels.end(), 1.0f);
  EXPECT_GT(pos, 0);
  EXPECT_EQ(2 * pos, static_cast<long>(labels.size()));
  EXPECT_EQ(run(dir, "balance --out-dir " + q(dir / "o3") + " " + q(dir / "b.ppg.csv")).code, 2);
}

TEST(Cli, SnrAndBadInputs) {
  TempDir dir;
  ASSERT_EQ(run(dir, "synth --duration 180 --seed 1 --subject n --out-dir " + q(dir.path())).code, 0);
  auto r = run(dir, "snr " + q(dir / "n.ppg.csv"));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("index,start_s,snr_db\n", 0), 0u);
  testutil::write_file(dir / "bad.ppg.csv", "t_s,ppg\n0,1\n");
  r = run(dir, "snr " + q(dir / "bad.ppg.csv"));  // no sidecar
  EXPECT_EQ(r.code, 1);
}
