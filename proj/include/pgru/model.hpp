// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgru/dataio.hpp"
#include "pgru/fusion.hpp"
#include "pgru/metrics.hpp"
#include "pgru/optim.hpp"
#include "pgru/preprocess.hpp"
#include "pgru/rnn.hpp"

namespace pgru {

/// leakfree: normalization is fitted on training rows of each fold.
/// global: fitted once on every row before splitting.
enum class NormalizationMode { LeakFree, Global };

/// Which stream predictions of the training windows the fusion is fitted on.
/// out_of_fold: each window's prediction comes from the cross-validation fold
/// that held it out, so the fusion sees the streams' generalization error.
/// in_sample: predictions of the streams that trained on those windows.
enum class FusionInputs { OutOfFold, InSample };

struct PgruConfig {
  std::size_t window = 15;
  CellType cell = CellType::Gru;
  std::size_t hidden_dim = 32;
  std::size_t layers = 1;
  std::size_t head_width = 16;
  std::size_t head_layers = 1;
  std::size_t epochs = 200;
  std::size_t folds = 10;
  FoldScheme scheme = FoldScheme::Block;
  std::uint64_t seed = 1;
  AdamConfig adam;
  LmState lm;
  FusionSpec fusion;
  NormalizationMode normalization = NormalizationMode::LeakFree;
  Scaling scaling = Scaling::ZScore;
  /// Trailing share of each training split held out to pick the best epoch.
  double inner_valid_fraction = 0.1;
  FusionInputs fusion_inputs = FusionInputs::InSample;
  /// Share of fusion pairs held out to stop LM early; 0 disables. With
  /// out-of-fold inputs any positive value holds out one whole fold instead.
  double fusion_holdout_fraction = 0.0;
  std::size_t jobs = 1;

  StreamSpec stream_spec(std::size_t input_dim) const;
  StreamTrainConfig train_config(std::uint64_t seed) const;
};

void to_json(nlohmann::json& j, const PgruConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, PgruConfig& c);
void validate_config(const PgruConfig& c);

struct TrainedModel {
  PgruConfig config;
  NormParams price_norm;
  NormParams struct_norm;
  StreamNetwork price_stream;
  StreamNetwork struct_stream;
  FusionNetwork fusion;
};

/// Sample indices refer to window_starts(data, w).
struct FoldSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> norm_rows;  // dataset rows used to fit normalization
};

/// Block folds purge training windows that share any row with a validation
/// window. In leak-free mode normalization rows exclude every row touched by
/// a validation window.
std::vector<FoldSplit> plan_cv(const AlignedDataset& data, const PgruConfig& cfg);
std::pair<NormParams, NormParams> fit_normalization(const AlignedDataset& data, const FoldSplit& split,
                                                    const PgruConfig& cfg);

struct FoldMetrics {
  std::string fold;  // index, or "all" for the pooled aggregate
  std::size_t n_train = 0;
  std::size_t n_valid = 0;
  MetricsReport fused;
  MetricsReport persistence;
  MetricsReport price_stream;
  MetricsReport struct_stream;
};

struct CvReport {
  std::vector<FoldMetrics> folds;
  FoldMetrics aggregate;
};

void write_cv_report_csv(std::ostream& out, const CvReport& report);

struct TracePoint {
  Date date;
  double truth = 0.0;
  double pred = 0.0;
};

struct StreamHistories {
  std::vector<EpochRecord> price;
  std::vector<EpochRecord> structural;
};

struct TrainResult {
  TrainedModel model;
  CvReport cv;
  std::vector<StreamHistories> fold_histories;
  StreamHistories final_history;
  /// Final model's fused predictions on every training window, raw units.
  std::vector<TracePoint> final_trace;
};

/// Cross-validates, then refits on every window with the same recipe.
TrainResult train_pgru(const AlignedDataset& data, const PgruConfig& cfg);

/// Raw windows (w x 4 and w x 5) to a raw next-day average price.
double predict_next(const TrainedModel& model, const Matrix& price_window, const Matrix& struct_window);

/// Fused prediction for one raw window expressed in normalized target units.
double predict_normalized(const TrainedModel& model, const Matrix& price_window, const Matrix& struct_window);

struct ForecastResult {
  std::vector<DayError> days;
};

/// Recursive multi-day forecast from the last w rows of `history`. Each
/// predicted day is appended with avg=open=low=high=prediction and the last
/// observed structural row carried forward. `truth`, when given, must hold
/// `horizon` actual prices and fills the error columns.
ForecastResult forecast_horizon(const TrainedModel& model, const AlignedDataset& history, std::size_t horizon,
                                std::span<const double> truth = {});

/// Teacher-forced one-step predictions for every admissible window.
ForecastResult evaluate_one_step(const TrainedModel& model, const AlignedDataset& data);

void write_checkpoint(std::ostream& out, const TrainedModel& model);
TrainedModel read_checkpoint(std::istream& in);

std::string dataset_digest(const AlignedDataset& data);
nlohmann::json run_manifest(const TrainedModel& model, const AlignedDataset& data, const CvReport& report);

}  // namespace pgru
