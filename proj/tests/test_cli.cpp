// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "pgru/commands.hpp"
#include "test_support.hpp"

namespace pgru {
namespace {

using testing::TempDir;

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) { return read_text_file(p); }

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

const std::vector<std::string> kQuick = {"--window", "5", "--hidden", "4", "--head-width", "4", "--epochs", "4",
                                         "--folds", "2", "--fusion-hidden", "2"};

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

TEST(Synth, SameSeedGivesIdenticalFiles) {
  TempDir a("synth-a"), b("synth-b");
  ASSERT_EQ(cli({"synth", "--seed", "1", "--days", "365", "--out", a.path().string()}).code, 0);
  ASSERT_EQ(cli({"synth", "--seed", "1", "--days", "365", "--out", b.path().string()}).code, 0);
  EXPECT_EQ(slurp(a / "price.csv"), slurp(b / "price.csv"));
  EXPECT_EQ(slurp(a / "structural.csv"), slurp(b / "structural.csv"));
  EXPECT_EQ(lines_of(slurp(a / "price.csv")).size(), 366u);
  TempDir c("synth-c");
  ASSERT_EQ(cli({"synth", "--seed", "2", "--days", "365", "--out", c.path().string()}).code, 0);
  EXPECT_NE(slurp(a / "price.csv"), slurp(c / "price.csv"));
}

TEST(Synth, OutputPassesValidation) {
  TempDir dir("synth");
  for (const char* profile : {"default", "noise-structural", "smooth"}) {
    ASSERT_EQ(cli({"synth", "--days", "120", "--profile", profile, "--out", dir.path().string()}).code, 0);
    const auto r = cli({"validate", "--price", (dir / "price.csv").string(), "--structural",
                        (dir / "structural.csv").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("aligned rows:    120"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("gaps:            0"), std::string::npos);
  }
}

TEST(Synth, PriceBandInvariantAndStructuralPositivity) {
  for (auto profile : {SynthProfile::Default, SynthProfile::NoiseStructural, SynthProfile::Smooth}) {
    const auto d = synthesize(9, 500, profile);
    for (const auto& r : d.price) {
      EXPECT_LE(r.low, r.avg);
      EXPECT_LE(r.avg, r.high);
      EXPECT_LE(r.low, r.open);
      EXPECT_LE(r.open, r.high);
      EXPECT_GT(r.low, 0.0);
    }
    for (const auto& s : d.structural) {
      EXPECT_GT(s.block_size, 0.0);
      EXPECT_GT(s.miner_revenue, 0.0);
      EXPECT_EQ(s.tx_count, std::round(s.tx_count));
    }
  }
}

TEST(Synth, TooFewDaysIsDomainError) {
  TempDir dir("synth");
  EXPECT_EQ(cli({"synth", "--days", "29", "--out", dir.path().string()}).code, exit_code(ErrorKind::Domain));
  EXPECT_NE(cli({"synth", "--profile", "bogus", "--out", dir.path().string()}).code, 0);
}

TEST(Validate, MalformedCellPrintsLineNumber) {
  TempDir dir("validate");
  ASSERT_EQ(cli({"synth", "--days", "40", "--out", dir.path().string()}).code, 0);
  auto text = slurp(dir / "price.csv");
  auto lines = lines_of(text);
  lines[3] = "2016-01-03,abc,1,1,1";
  std::ofstream bad(dir / "bad.csv");
  for (const auto& l : lines) bad << l << "\n";
  bad.close();
  const auto r = cli({"validate", "--price", (dir / "bad.csv").string(), "--structural",
                      (dir / "structural.csv").string()});
  EXPECT_EQ(r.code, exit_code(ErrorKind::Parse));
  EXPECT_NE(r.err.find("bad.csv:4"), std::string::npos) << r.err;
}

TEST(Validate, DisjointDatesSurfaceAlignmentError) {
  TempDir dir("validate");
  std::ofstream(dir / "p.csv") << "date,avg,open,low,high\n2016-01-01,10,10,9,11\n";
  std::ofstream(dir / "s.csv") << "date,block_size,hash_rate,difficulty,tx_count,miner_revenue\n2017-01-01,1,1,1,1,1\n";
  const auto r = cli({"validate", "--price", (dir / "p.csv").string(), "--structural", (dir / "s.csv").string()});
  EXPECT_EQ(r.code, exit_code(ErrorKind::Alignment));
  EXPECT_NE(r.err.find("alignment error"), std::string::npos) << r.err;
}

TEST(Validate, DumpSamples) {
  TempDir dir("validate");
  ASSERT_EQ(cli({"synth", "--days", "40", "--out", dir.path().string()}).code, 0);
  const auto r = cli({"validate", "--price", (dir / "price.csv").string(), "--structural",
                      (dir / "structural.csv").string(), "--window", "7", "--dump-samples", (dir / "s").string()});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("wrote 33 samples"), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir / "s" / "output.csv"));
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"train"}).code, 2);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

class TrainedCli : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli-trained");
    auto r = cli({"synth", "--days", "80", "--out", dir_->path().string()});
    ASSERT_EQ(r.code, 0);
    r = cli(with({"train", "--price", price(), "--structural", structural(), "--out", out_dir()}, kQuick));
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { delete dir_; }
  static std::string price() { return (*dir_ / "price.csv").string(); }
  static std::string structural() { return (*dir_ / "structural.csv").string(); }
  static std::string out_dir() { return (*dir_ / "run").string(); }
  static std::string checkpoint() { return (*dir_ / "run" / "checkpoint.txt").string(); }
  static TempDir* dir_;
};
TempDir* TrainedCli::dir_ = nullptr;

TEST_F(TrainedCli, WritesAllArtifacts) {
  for (const char* f : {"checkpoint.txt", "cv_report.csv", "manifest.json", "history_price.csv",
                        "history_structural.csv", "train_trace.csv"}) {
    EXPECT_TRUE(std::filesystem::exists(*dir_ / "run" / f)) << f;
  }
  const auto report = lines_of(slurp(*dir_ / "run" / "cv_report.csv"));
  EXPECT_EQ(report.size(), 4u);
  EXPECT_EQ(report.back().substr(0, 4), "all,");
  EXPECT_EQ(lines_of(slurp(*dir_ / "run" / "history_price.csv")).size(), 5u);
}

TEST_F(TrainedCli, RerunIsByteIdentical) {
  TempDir again("cli-again");
  const auto r = cli(with({"train", "--price", price(), "--structural", structural(), "--out", again.path().string()},
                          kQuick));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(again / "cv_report.csv"), slurp(*dir_ / "run" / "cv_report.csv"));
  EXPECT_EQ(slurp(again / "checkpoint.txt"), slurp(checkpoint()));
  EXPECT_EQ(slurp(again / "manifest.json"), slurp(*dir_ / "run" / "manifest.json"));
}

TEST_F(TrainedCli, ForecastTenDays) {
  const auto csv = (*dir_ / "fc.csv").string();
  const auto r = cli({"forecast", "--checkpoint", checkpoint(), "--price", price(), "--structural", structural(),
                      "--horizon", "10", "--holdout", "--out", csv});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(slurp(csv));
  ASSERT_EQ(lines.size(), 11u);
  EXPECT_EQ(lines[0], "day,true,pred,abs_err,abs_pct_err");
  for (std::size_t i = 1; i <= 10; ++i) {
    double day, truth, pred, abs_err, pct;
    char c;
    std::istringstream row(lines[i]);
    row >> day >> c >> truth >> c >> pred >> c >> abs_err >> c >> pct;
    ASSERT_TRUE(row) << lines[i];
    EXPECT_EQ(day, static_cast<double>(i));
    EXPECT_NEAR(std::abs(truth - pred), abs_err, 0.1 + 1e-9);
    EXPECT_NEAR(100.0 * abs_err / truth, pct, 0.01);
  }
  EXPECT_EQ(r.out, slurp(csv));
}

TEST_F(TrainedCli, ForecastJsonWithoutTruth) {
  const auto json_path = (*dir_ / "fc.json").string();
  const auto r = cli({"forecast", "--checkpoint", checkpoint(), "--price", price(), "--structural", structural(),
                      "-H", "3", "--out", json_path});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(json_path));
  ASSERT_EQ(j.size(), 3u);
  EXPECT_TRUE(j[0]["true"].is_null());
}

TEST_F(TrainedCli, HorizonOneMatchesOneStepEvaluation) {
  const auto fc = (*dir_ / "h1.csv").string();
  ASSERT_EQ(cli({"forecast", "--checkpoint", checkpoint(), "--price", price(), "--structural", structural(), "-H",
                 "1", "--holdout", "--out", fc})
                .code,
            0);
  const auto ev = (*dir_ / "eval").string();
  const auto r = cli({"evaluate", "--checkpoint", checkpoint(), "--price", price(), "--structural", structural(),
                      "--out", ev});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto one_step = lines_of(slurp(*dir_ / "eval" / "one_step.csv"));
  const auto forecast = lines_of(slurp(fc));
  // The holdout forecast's only day is the last one-step window.
  auto cols = [](const std::string& line) { return line.substr(line.find(',') + 1); };
  EXPECT_EQ(cols(forecast[1]), cols(one_step.back()));
  EXPECT_EQ(one_step.size(), 80u - 5u + 1u);
  const auto metrics = nlohmann::json::parse(slurp(*dir_ / "eval" / "metrics.json"));
  EXPECT_EQ(metrics["n"], 75);
}

TEST_F(TrainedCli, HorizonZeroIsDomainError) {
  const auto r = cli({"forecast", "--checkpoint", checkpoint(), "--price", price(), "--structural", structural(),
                      "--horizon", "0"});
  EXPECT_EQ(r.code, exit_code(ErrorKind::Domain));
}

TEST_F(TrainedCli, MissingCheckpointIsIoError) {
  const auto r = cli({"forecast", "--checkpoint", (*dir_ / "nope.txt").string(), "--price", price(),
                      "--structural", structural()});
  EXPECT_EQ(r.code, exit_code(ErrorKind::Io));
}

TEST(Train, WindowLongerThanDataIsWindowError) {
  TempDir dir("train");
  ASSERT_EQ(cli({"synth", "--days", "30", "--out", dir.path().string()}).code, 0);
  // Keep 20 rows.
  for (const char* name : {"price.csv", "structural.csv"}) {
    auto lines = lines_of(slurp(dir / name));
    std::ofstream f(dir / name);
    for (std::size_t i = 0; i <= 20; ++i) f << lines[i] << "\n";
  }
  const auto r = cli({"train", "--price", (dir / "price.csv").string(), "--structural",
                      (dir / "structural.csv").string(), "--window", "25", "--out", (dir / "run").string()});
  EXPECT_EQ(r.code, exit_code(ErrorKind::Window));
  EXPECT_NE(r.err.find("window error"), std::string::npos) << r.err;
}

TEST(Train, LstmFlagRecordedInManifestAndConfigFileMerges) {
  TempDir dir("train");
  ASSERT_EQ(cli({"synth", "--days", "50", "--out", dir.path().string()}).code, 0);
  std::ofstream(dir / "cfg.json") << R"({"epochs": 2, "folds": 3, "window": 9, "seed": 5})";
  const auto r = cli(with({"train", "--price", (dir / "price.csv").string(), "--structural",
                           (dir / "structural.csv").string(), "--out", (dir / "run").string(), "--config",
                           (dir / "cfg.json").string(), "--cell", "lstm"},
                          {"--window", "5", "--hidden", "3", "--fusion-hidden", "0"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = nlohmann::json::parse(slurp(dir / "run" / "manifest.json"));
  EXPECT_EQ(m["config"]["cell"], "LSTM");
  EXPECT_EQ(m["cell"], "LSTM");
  EXPECT_EQ(m["config"]["window"], 5);
  EXPECT_EQ(m["config"]["folds"], 3);
  EXPECT_EQ(m["config"]["seed"], 5);
  EXPECT_EQ(m["config"]["fusion"]["hidden"], 0);
  EXPECT_EQ(m["dataset"]["rows"], 50);
}

TEST(Train, BadConfigValuesAreReported) {
  TempDir dir("train");
  ASSERT_EQ(cli({"synth", "--days", "50", "--out", dir.path().string()}).code, 0);
  const std::vector<std::string> base = {"train", "--price", (dir / "price.csv").string(), "--structural",
                                         (dir / "structural.csv").string(), "--out", (dir / "run").string()};
  EXPECT_EQ(cli(with(base, {"--folds", "1"})).code, exit_code(ErrorKind::Domain));
  EXPECT_EQ(cli(with(base, {"--cell", "rnn"})).code, exit_code(ErrorKind::Domain));
  std::ofstream(dir / "bad.json") << "{not json";
  EXPECT_EQ(cli(with(base, {"--config", (dir / "bad.json").string()})).code, exit_code(ErrorKind::Parse));
}

TEST(OutputDir, EnvironmentVariableSetsDefault) {
  TempDir dir("envdir");
  ::setenv(kOutputDirEnv, dir.path().c_str(), 1);
  EXPECT_EQ(default_output_dir(), dir.path());
  ASSERT_EQ(cli({"synth", "--days", "30"}).code, 0);
  ::unsetenv(kOutputDirEnv);
  EXPECT_TRUE(std::filesystem::exists(dir / "price.csv"));
  EXPECT_EQ(default_output_dir(), "pgru-out");
}

TEST(Bench, RepeatsBelowThreeIsDomainError) {
  EXPECT_EQ(cli({"bench", "--repeats", "1"}).code, exit_code(ErrorKind::Domain));
}

TEST(Bench, TableLayout) {
  TempDir dir("bench");
  const auto csv = (dir / "bench.csv").string();
  const auto r = cli(with({"bench", "--windows", "3,4", "--repeats", "3", "--synth-days", "40", "--out", csv},
                          {"--hidden", "2", "--head-width", "2", "--epochs", "1", "--folds", "2", "--fusion-hidden",
                           "0"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto lines = lines_of(r.out);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "cell,window,repeats,mean_seconds");
  EXPECT_EQ(lines[1].substr(0, 10), "GRU,3,3,0.");
  EXPECT_EQ(lines[4].substr(0, 7), "LSTM,4,");
  EXPECT_EQ(slurp(csv), r.out);
}

}  // namespace
}  // namespace pgru
