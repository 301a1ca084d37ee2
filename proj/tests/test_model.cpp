// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "pgru/model.hpp"
#include "test_support.hpp"

namespace pgru {
namespace {

PgruConfig quick_config() {
  PgruConfig c;
  c.window = 5;
  c.hidden_dim = 4;
  c.head_width = 4;
  c.epochs = 15;
  c.folds = 2;
  c.fusion.hidden = 2;
  return c;
}

/// One shared training run keeps the suite fast.
class TrainedFixture : public ::testing::Test {
protected:
  static void SetUpTestSuite() {
    data_ = new AlignedDataset(testing::synth_dataset(1, 60));
    result_ = new TrainResult(train_pgru(*data_, quick_config()));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete data_;
  }
  static AlignedDataset* data_;
  static TrainResult* result_;
};
AlignedDataset* TrainedFixture::data_ = nullptr;
TrainResult* TrainedFixture::result_ = nullptr;

TEST(Config, JsonRoundTripAndUnknownKey) {
  PgruConfig c = quick_config();
  c.cell = CellType::Lstm;
  c.scheme = FoldScheme::Shuffled;
  c.normalization = NormalizationMode::Global;
  c.fusion_inputs = FusionInputs::OutOfFold;
  c.adam.lr = 0.02;
  c.lm.max_iters = 17;
  const nlohmann::json j = c;
  const auto back = j.get<PgruConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  EXPECT_EQ(j["cell"], "LSTM");
  nlohmann::json bad = j;
  bad["windw"] = 3;
  EXPECT_PGRU_ERROR(bad.get<PgruConfig>(), ErrorKind::Domain);
}

TEST(Config, PartialJsonKeepsDefaults) {
  const auto c = nlohmann::json::parse(R"({"window": 20})").get<PgruConfig>();
  EXPECT_EQ(c.window, 20u);
  EXPECT_EQ(c.folds, PgruConfig{}.folds);
  EXPECT_EQ(c.fusion_inputs, FusionInputs::InSample);
}

TEST(Config, ValidationRejectsBadValues) {
  auto c = quick_config();
  c.folds = 1;
  EXPECT_PGRU_ERROR(validate_config(c), ErrorKind::Domain);
  c = quick_config();
  c.window = 0;
  EXPECT_PGRU_ERROR(validate_config(c), ErrorKind::Window);
  c = quick_config();
  c.inner_valid_fraction = 1.0;
  EXPECT_PGRU_ERROR(validate_config(c), ErrorKind::Domain);
}

TEST(PlanCv, PreconditionsOnRowCount) {
  const auto data = testing::synth_dataset(1, 30);
  auto c = quick_config();
  c.window = 30;
  EXPECT_PGRU_ERROR(plan_cv(data, c), ErrorKind::Window);
  c.window = 27;
  c.folds = 3;
  EXPECT_PGRU_ERROR(plan_cv(data, c), ErrorKind::Domain);
}

TEST(PlanCv, BlockFoldsPurgeOverlapAndNormRowsExcludeValidation) {
  const auto data = testing::synth_dataset(2, 80);
  auto c = quick_config();
  c.folds = 4;
  const auto splits = plan_cv(data, c);
  ASSERT_EQ(splits.size(), 4u);
  std::set<std::size_t> all_valid;
  for (const auto& s : splits) {
    std::set<std::size_t> valid_rows;
    for (auto v : s.valid) {
      EXPECT_TRUE(all_valid.insert(v).second);
      for (std::size_t r = v; r <= v + c.window; ++r) valid_rows.insert(r);
    }
    for (auto t : s.train) {
      for (std::size_t r = t; r <= t + c.window; ++r) EXPECT_FALSE(valid_rows.contains(r)) << "train " << t;
    }
    for (auto r : s.norm_rows) EXPECT_FALSE(valid_rows.contains(r)) << "norm row " << r;
    EXPECT_FALSE(s.train.empty());
  }
  EXPECT_EQ(all_valid.size(), data.size() - c.window);
}

TEST(PlanCv, GlobalModeUsesEveryRow) {
  const auto data = testing::synth_dataset(2, 50);
  auto c = quick_config();
  c.normalization = NormalizationMode::Global;
  for (const auto& s : plan_cv(data, c)) EXPECT_EQ(s.norm_rows.size(), data.size());
}

TEST(LeakFree, SentinelValidationRowsNeverReachNormalization) {
  auto data = testing::synth_dataset(3, 60);
  const auto c = quick_config();
  const auto splits = plan_cv(data, c);
  for (std::size_t f = 0; f < splits.size(); ++f) {
    auto marked = data;
    std::set<std::size_t> valid_rows;
    for (auto v : splits[f].valid)
      for (std::size_t r = v; r <= v + c.window; ++r) valid_rows.insert(r);
    for (auto r : valid_rows) {
      for (std::size_t j = 0; j < kPriceFeatures; ++j) marked.price(r, j) = 1e12;
      for (std::size_t j = 0; j < kStructFeatures; ++j) marked.structural(r, j) = 1e12;
    }
    const auto [pn, sn] = fit_normalization(marked, splits[f], c);
    const auto [pn_clean, sn_clean] = fit_normalization(data, splits[f], c);
    for (std::size_t j = 0; j < kPriceFeatures; ++j) {
      EXPECT_LT(pn.center[j], 1e6);
      EXPECT_EQ(pn.center[j], pn_clean.center[j]);
      EXPECT_EQ(pn.scale[j], pn_clean.scale[j]);
    }
    for (std::size_t j = 0; j < kStructFeatures; ++j) EXPECT_EQ(sn.center[j], sn_clean.center[j]);
  }
}

TEST(Denormalization, RoundTrip) {
  const auto data = testing::synth_dataset(4, 60);
  const auto p = zscore_fit(data.price);
  SeededRng rng(4);
  for (int i = 0; i < 100; ++i) {
    const double z = rng.uniform(-3, 3);
    EXPECT_NEAR(p.apply(0, p.invert(0, z)), z, 1e-12);
  }
}

TEST_F(TrainedFixture, CvReportHasOneRowPerFoldPlusAggregate) {
  const auto& cv = result_->cv;
  ASSERT_EQ(cv.folds.size(), 2u);
  EXPECT_EQ(cv.folds[0].fold, "0");
  EXPECT_EQ(cv.aggregate.fold, "all");
  EXPECT_EQ(cv.aggregate.n_valid, cv.folds[0].n_valid + cv.folds[1].n_valid);
  EXPECT_EQ(cv.aggregate.n_valid, data_->size() - 5);
  std::ostringstream out;
  write_cv_report_csv(out, cv);
  std::size_t lines = 0;
  std::istringstream in(out.str());
  for (std::string line; std::getline(in, line);) ++lines;
  EXPECT_EQ(lines, 4u);
  EXPECT_EQ(out.str().substr(0, 8), "fold,n_t");
}

TEST_F(TrainedFixture, MetricsAreInRawUnitsAndConsistent) {
  for (const auto& f : result_->cv.folds) {
    EXPECT_NEAR(f.fused.rmse, std::sqrt(f.fused.mse), 1e-9 * f.fused.rmse);
    EXPECT_LE(f.fused.mae, f.fused.rmse + 1e-9);
    // Prices are in the thousands, so raw-unit errors are far above normalized scale.
    EXPECT_GT(f.persistence.mae, 1.0);
  }
}

TEST_F(TrainedFixture, ModelComponentsAreConsistent) {
  const auto& m = result_->model;
  EXPECT_EQ(m.price_stream.input_dim(), kPriceFeatures);
  EXPECT_EQ(m.struct_stream.input_dim(), kStructFeatures);
  EXPECT_EQ(m.price_norm.columns(), kPriceFeatures);
  EXPECT_EQ(m.struct_norm.columns(), kStructFeatures);
  EXPECT_EQ(m.price_stream.hidden_dim(), 4u);
  EXPECT_EQ(m.fusion.spec().hidden, 2u);
  EXPECT_EQ(result_->final_history.price.size(), 15u);
  EXPECT_EQ(result_->fold_histories.size(), 2u);
}

TEST_F(TrainedFixture, PredictNextReproducesTrainingTrace) {
  const auto& trace = result_->final_trace;
  ASSERT_EQ(trace.size(), data_->size() - 5);
  const std::size_t s = data_->size() - 6;
  const auto win = data_->slice(s, 5);
  const double pred = predict_next(result_->model, win.price, win.structural);
  EXPECT_NEAR(pred, trace.back().pred, 1e-9);
  EXPECT_EQ(trace.back().date, data_->dates.back());
  EXPECT_EQ(trace.back().truth, data_->price(data_->size() - 1, 0));
}

TEST_F(TrainedFixture, WindowShapeMismatchIsShapeError) {
  const auto win = data_->slice(0, 6);
  EXPECT_PGRU_ERROR(predict_next(result_->model, win.price, win.structural), ErrorKind::Shape);
  const auto ok = data_->slice(0, 5);
  EXPECT_PGRU_ERROR(predict_next(result_->model, ok.price, Matrix(5, 4)), ErrorKind::Shape);
}

TEST_F(TrainedFixture, CopyFusionReturnsDenormalizedPriceStream) {
  auto model = result_->model;
  SeededRng rng(1);
  model.fusion = FusionNetwork::create({0, Activation::Identity}, rng);
  model.fusion.assign(std::vector<double>{1.0, 0.0, 0.0});
  const auto win = data_->slice(10, 5);
  const double p1 = stream_forward(model.price_stream, zscore_apply(model.price_norm, win.price)).first;
  EXPECT_NEAR(predict_next(model, win.price, win.structural), model.price_norm.invert(0, p1), 1e-6);
}

TEST_F(TrainedFixture, HorizonOneEqualsPredictNext) {
  const auto f = forecast_horizon(result_->model, *data_, 1);
  ASSERT_EQ(f.days.size(), 1u);
  const auto tail = data_->slice(data_->size() - 5, 5);
  EXPECT_EQ(f.days[0].pred, predict_next(result_->model, tail.price, tail.structural));
  EXPECT_EQ(*f.days[0].date, data_->dates.back() + std::chrono::days{1});
  EXPECT_FALSE(f.days[0].truth.has_value());
}

TEST_F(TrainedFixture, RecursiveHorizonFeedsPredictionsBack) {
  const auto history = data_->slice(0, data_->size() - 10);
  std::vector<double> truth;
  for (std::size_t i = data_->size() - 10; i < data_->size(); ++i) truth.push_back(data_->price(i, 0));
  const auto f = forecast_horizon(result_->model, history, 10, truth);
  ASSERT_EQ(f.days.size(), 10u);

  // Manual recursion over the documented synthetic-row rule.
  auto win = history.slice(history.size() - 5, 5);
  const std::vector<double> last_struct(win.structural.row(4).begin(), win.structural.row(4).end());
  for (std::size_t d = 0; d < 10; ++d) {
    const double pred = predict_next(result_->model, win.price, win.structural);
    EXPECT_EQ(f.days[d].pred, pred);
    EXPECT_EQ(f.days[d].day, d + 1);
    EXPECT_NEAR(*f.days[d].abs_err, std::abs(truth[d] - pred), 1e-9);
    EXPECT_NEAR(*f.days[d].abs_pct_err, 100.0 * std::abs(truth[d] - pred) / truth[d], 1e-9);
    Matrix p(5, 4), s(5, 5);
    for (std::size_t t = 0; t < 4; ++t) {
      std::ranges::copy(win.price.row(t + 1), p.row(t).begin());
      std::ranges::copy(win.structural.row(t + 1), s.row(t).begin());
    }
    std::ranges::fill(p.row(4), pred);
    std::ranges::copy(last_struct, s.row(4).begin());
    win.price = p;
    win.structural = s;
  }
}

TEST_F(TrainedFixture, HorizonPreconditions) {
  EXPECT_PGRU_ERROR(forecast_horizon(result_->model, *data_, 0), ErrorKind::Domain);
  EXPECT_PGRU_ERROR(forecast_horizon(result_->model, data_->slice(0, 4), 3), ErrorKind::Window);
  EXPECT_PGRU_ERROR(forecast_horizon(result_->model, *data_, 3, std::vector<double>{1, 2}), ErrorKind::Shape);
}

TEST_F(TrainedFixture, OneStepEvaluationMatchesTrace) {
  const auto e = evaluate_one_step(result_->model, *data_);
  ASSERT_EQ(e.days.size(), result_->final_trace.size());
  for (std::size_t i = 0; i < e.days.size(); ++i) EXPECT_NEAR(e.days[i].pred, result_->final_trace[i].pred, 1e-9);
}

TEST_F(TrainedFixture, CheckpointRoundTripIsExact) {
  std::ostringstream out;
  write_checkpoint(out, result_->model);
  std::istringstream in(out.str());
  const auto back = read_checkpoint(in);
  std::ostringstream again;
  write_checkpoint(again, back);
  EXPECT_EQ(out.str(), again.str());
  EXPECT_EQ(parameter_fingerprint(back.price_stream), parameter_fingerprint(result_->model.price_stream));
  const auto win = data_->slice(20, 5);
  EXPECT_EQ(predict_next(back, win.price, win.structural), predict_next(result_->model, win.price, win.structural));
}

TEST_F(TrainedFixture, CorruptCheckpointReportsLine) {
  std::ostringstream out;
  write_checkpoint(out, result_->model);
  std::string text = out.str();
  {
    std::istringstream in("not-a-checkpoint\n");
    EXPECT_PGRU_ERROR(read_checkpoint(in), ErrorKind::Parse);
  }
  const auto pos = text.find("tensor rnn0.update_in");
  ASSERT_NE(pos, std::string::npos);
  const auto eol = text.find('\n', pos);
  text.replace(eol + 1, 1, "x");
  std::istringstream in(text);
  try {
    read_checkpoint(in);
    FAIL() << "expected parse error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Parse);
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos) << e.what();
  }
}

TEST_F(TrainedFixture, ManifestRecordsConfigAndDigest) {
  const auto m = run_manifest(result_->model, *data_, result_->cv);
  EXPECT_EQ(m["config"]["cell"], "GRU");
  EXPECT_EQ(m["dataset"]["rows"], data_->size());
  EXPECT_EQ(m["dataset"]["sha256"].get<std::string>().size(), 64u);
  EXPECT_EQ(m["dataset"]["sha256"], dataset_digest(*data_));
  EXPECT_TRUE(m["metrics"].contains("cv"));
  auto other = *data_;
  other.price(0, 0) += 1.0;
  EXPECT_NE(dataset_digest(other), dataset_digest(*data_));
}

TEST(TrainPgru, DeterministicAndJobCountInvariant) {
  const auto data = testing::synth_dataset(5, 50);
  auto c = quick_config();
  c.epochs = 5;
  const auto a = train_pgru(data, c);
  c.jobs = 3;
  const auto b = train_pgru(data, c);
  std::ostringstream ra, rb, ca, cb;
  write_cv_report_csv(ra, a.cv);
  write_cv_report_csv(rb, b.cv);
  write_checkpoint(ca, a.model);
  write_checkpoint(cb, b.model);
  EXPECT_EQ(ra.str(), rb.str());
  EXPECT_EQ(ca.str(), cb.str());
  c.seed = 2;
  const auto d = train_pgru(data, c);
  std::ostringstream cd;
  write_checkpoint(cd, d.model);
  EXPECT_NE(ca.str(), cd.str());
}

TEST(TrainPgru, OutOfFoldModeTrains) {
  const auto data = testing::synth_dataset(6, 50);
  auto c = quick_config();
  c.epochs = 5;
  c.folds = 3;
  c.fusion_inputs = FusionInputs::OutOfFold;
  c.fusion_holdout_fraction = 0.15;
  const auto r = train_pgru(data, c);
  EXPECT_EQ(r.cv.folds.size(), 3u);
  EXPECT_TRUE(std::isfinite(r.cv.aggregate.fused.mse));
}

TEST(TrainPgru, LstmAndShuffledVariants) {
  const auto data = testing::synth_dataset(7, 50);
  auto c = quick_config();
  c.epochs = 3;
  c.cell = CellType::Lstm;
  c.scheme = FoldScheme::Shuffled;
  const auto r = train_pgru(data, c);
  EXPECT_EQ(r.model.price_stream.cell, CellType::Lstm);
  EXPECT_EQ(r.cv.folds.size(), 2u);
}

}  // namespace
}  // namespace pgru
