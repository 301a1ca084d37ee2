// SPDX-License-Identifier: Apache-2.0
#include "pgru/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <exception>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <fmt/ranges.h>
#include <openssl/evp.h>

#include "pgru/error.hpp"
#include "pgru/parallel.hpp"

namespace pgru {

// ---------------------------------------------------------------------------
// Config

namespace {

std::string_view scheme_name(FoldScheme s) { return s == FoldScheme::Block ? "block" : "shuffled"; }
std::string_view normalization_name(NormalizationMode m) {
  return m == NormalizationMode::LeakFree ? "leakfree" : "global";
}
std::string_view fusion_inputs_name(FusionInputs f) {
  return f == FusionInputs::OutOfFold ? "out_of_fold" : "in_sample";
}
std::string_view scaling_name(Scaling s) { return s == Scaling::ZScore ? "zscore" : "minmax"; }
std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
  }
  return "identity";
}

template <typename T>
T parse_enum(std::string_view text, std::initializer_list<std::pair<std::string_view, T>> options,
             std::string_view what) {
  for (const auto& [name, value] : options)
    if (name == text) return value;
  fail(ErrorKind::Domain, "unknown {} '{}'", what, text);
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

StreamSpec PgruConfig::stream_spec(std::size_t input_dim) const {
  return StreamSpec{cell, input_dim, hidden_dim, layers, head_width, head_layers};
}

StreamTrainConfig PgruConfig::train_config(std::uint64_t stream_seed) const {
  StreamTrainConfig t;
  t.epochs = epochs;
  t.adam = adam;
  t.seed = stream_seed;
  return t;
}

void to_json(nlohmann::json& j, const PgruConfig& c) {
  j = nlohmann::json{
      {"window", c.window},
      {"cell", std::string(to_string(c.cell))},
      {"hidden_dim", c.hidden_dim},
      {"layers", c.layers},
      {"head_width", c.head_width},
      {"head_layers", c.head_layers},
      {"epochs", c.epochs},
      {"folds", c.folds},
      {"scheme", std::string(scheme_name(c.scheme))},
      {"seed", c.seed},
      {"adam", {{"lr", c.adam.lr}, {"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}},
      {"lm",
       {{"lambda", c.lm.lambda},
        {"lambda_up", c.lm.lambda_up},
        {"lambda_down", c.lm.lambda_down},
        {"max_iters", c.lm.max_iters},
        {"tol", c.lm.tol}}},
      {"fusion", {{"hidden", c.fusion.hidden}, {"activation", std::string(activation_name(c.fusion.activation))}}},
      {"normalization", std::string(normalization_name(c.normalization))},
      {"scaling", std::string(scaling_name(c.scaling))},
      {"inner_valid_fraction", c.inner_valid_fraction},
      {"fusion_inputs", std::string(fusion_inputs_name(c.fusion_inputs))},
      {"fusion_holdout_fraction", c.fusion_holdout_fraction},
      {"jobs", c.jobs},
  };
}

void from_json(const nlohmann::json& j, PgruConfig& c) {
  static const std::vector<std::string> known = {
      "window", "cell", "hidden_dim", "layers", "head_width", "head_layers", "epochs", "folds", "scheme", "seed",
      "adam", "lm", "fusion", "normalization", "scaling", "inner_valid_fraction", "fusion_inputs", "fusion_holdout_fraction", "jobs"};
  if (!j.is_object()) fail(ErrorKind::Domain, "config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (std::ranges::find(known, key) == known.end()) fail(ErrorKind::Domain, "unknown config key '{}'", key);
  }
  read_if(j, "window", c.window);
  if (j.contains("cell")) c.cell = parse_cell_type(j.at("cell").get<std::string>());
  read_if(j, "hidden_dim", c.hidden_dim);
  read_if(j, "layers", c.layers);
  read_if(j, "head_width", c.head_width);
  read_if(j, "head_layers", c.head_layers);
  read_if(j, "epochs", c.epochs);
  read_if(j, "folds", c.folds);
  if (j.contains("scheme")) {
    c.scheme = parse_enum<FoldScheme>(j.at("scheme").get<std::string>(),
                                      {{"block", FoldScheme::Block}, {"shuffled", FoldScheme::Shuffled}}, "scheme");
  }
  read_if(j, "seed", c.seed);
  if (j.contains("adam")) {
    const auto& a = j.at("adam");
    read_if(a, "lr", c.adam.lr);
    read_if(a, "beta1", c.adam.beta1);
    read_if(a, "beta2", c.adam.beta2);
    read_if(a, "eps", c.adam.eps);
  }
  if (j.contains("lm")) {
    const auto& l = j.at("lm");
    read_if(l, "lambda", c.lm.lambda);
    read_if(l, "lambda_up", c.lm.lambda_up);
    read_if(l, "lambda_down", c.lm.lambda_down);
    read_if(l, "max_iters", c.lm.max_iters);
    read_if(l, "tol", c.lm.tol);
  }
  if (j.contains("fusion")) {
    const auto& f = j.at("fusion");
    read_if(f, "hidden", c.fusion.hidden);
    if (f.contains("activation")) {
      c.fusion.activation = parse_enum<Activation>(
          f.at("activation").get<std::string>(),
          {{"tanh", Activation::Tanh}, {"identity", Activation::Identity}, {"sigmoid", Activation::Sigmoid}},
          "fusion activation");
    }
  }
  if (j.contains("normalization")) {
    c.normalization = parse_enum<NormalizationMode>(
        j.at("normalization").get<std::string>(),
        {{"leakfree", NormalizationMode::LeakFree}, {"global", NormalizationMode::Global}}, "normalization");
  }
  if (j.contains("scaling")) {
    c.scaling = parse_enum<Scaling>(j.at("scaling").get<std::string>(),
                                    {{"zscore", Scaling::ZScore}, {"minmax", Scaling::MinMax}}, "scaling");
  }
  read_if(j, "inner_valid_fraction", c.inner_valid_fraction);
  if (j.contains("fusion_inputs")) {
    c.fusion_inputs = parse_enum<FusionInputs>(
        j.at("fusion_inputs").get<std::string>(),
        {{"out_of_fold", FusionInputs::OutOfFold}, {"in_sample", FusionInputs::InSample}}, "fusion_inputs");
  }
  read_if(j, "fusion_holdout_fraction", c.fusion_holdout_fraction);
  read_if(j, "jobs", c.jobs);
}

void validate_config(const PgruConfig& c) {
  if (c.window < 1) fail(ErrorKind::Window, "window length must be at least 1");
  if (c.folds < 2) fail(ErrorKind::Domain, "fold count must be at least 2, got {}", c.folds);
  if (c.hidden_dim < 1 || c.layers < 1) fail(ErrorKind::Domain, "hidden_dim and layers must be positive");
  if (c.head_layers > 0 && c.head_width < 1) fail(ErrorKind::Domain, "head_width must be positive");
  if (!(c.adam.lr > 0) || !(c.adam.beta1 > 0 && c.adam.beta1 < 1) || !(c.adam.beta2 > 0 && c.adam.beta2 < 1) ||
      !(c.adam.eps > 0)) {
    fail(ErrorKind::Domain, "adam needs lr > 0, beta1/beta2 in (0,1) and eps > 0");
  }
  if (!(c.lm.lambda > 0) || !(c.lm.lambda_up > 1) || !(c.lm.lambda_down > 1) || !(c.lm.tol > 0)) {
    fail(ErrorKind::Domain, "lm needs lambda > 0, lambda_up/lambda_down > 1 and tol > 0");
  }
  if (!(c.inner_valid_fraction >= 0 && c.inner_valid_fraction < 1)) {
    fail(ErrorKind::Domain, "inner_valid_fraction must lie in [0, 1)");
  }
  if (!(c.fusion_holdout_fraction >= 0 && c.fusion_holdout_fraction < 0.5)) {
    fail(ErrorKind::Domain, "fusion_holdout_fraction must lie in [0, 0.5)");
  }
  if (c.jobs < 1) fail(ErrorKind::Domain, "jobs must be at least 1");
}

// ---------------------------------------------------------------------------
// Fold planning

std::vector<FoldSplit> plan_cv(const AlignedDataset& data, const PgruConfig& cfg) {
  validate_config(cfg);
  const std::size_t w = cfg.window;
  if (w >= data.size()) fail(ErrorKind::Window, "window length {} requires at least {} rows, got {}", w, w + 1,
                             data.size());
  if (data.size() <= w + cfg.folds) {
    fail(ErrorKind::Domain, "{} rows are too few for w = {} and {} folds", data.size(), w, cfg.folds);
  }
  const auto starts = window_starts(data, w);
  const auto plan = kfold_split(starts.size(), cfg.folds, cfg.scheme, cfg.seed);
  std::vector<FoldSplit> splits;
  for (std::size_t f = 0; f < cfg.folds; ++f) {
    FoldSplit split;
    std::vector<char> valid_row(data.size(), 0);
    for (std::size_t k = 0; k < starts.size(); ++k) {
      if (plan.assignments[k] != f) continue;
      split.valid.push_back(k);
      for (std::size_t r = starts[k]; r <= starts[k] + w; ++r) valid_row[r] = 1;
    }
    std::vector<char> train_row(data.size(), 0);
    for (std::size_t k = 0; k < starts.size(); ++k) {
      if (plan.assignments[k] == f) continue;
      bool overlaps = false;
      for (std::size_t r = starts[k]; r <= starts[k] + w && !overlaps; ++r) overlaps = valid_row[r];
      if (overlaps && cfg.scheme == FoldScheme::Block) continue;
      split.train.push_back(k);
      for (std::size_t r = starts[k]; r <= starts[k] + w; ++r) train_row[r] = 1;
    }
    if (split.train.empty()) fail(ErrorKind::Domain, "fold {} leaves no training windows", f);
    for (std::size_t r = 0; r < data.size(); ++r) {
      if (cfg.normalization == NormalizationMode::Global || (train_row[r] && !valid_row[r])) {
        split.norm_rows.push_back(r);
      }
    }
    splits.push_back(std::move(split));
  }
  return splits;
}

std::pair<NormParams, NormParams> fit_normalization(const AlignedDataset& data, const FoldSplit& split,
                                                    const PgruConfig& cfg) {
  return {fit_scaling(cfg.scaling, data.price, split.norm_rows),
          fit_scaling(cfg.scaling, data.structural, split.norm_rows)};
}

// ---------------------------------------------------------------------------
// Training

namespace {

StreamData stream_view(const std::vector<Matrix>& inputs, const std::vector<double>& targets,
                       std::span<const std::size_t> idx) {
  StreamData d;
  for (const auto i : idx) {
    d.windows.push_back(&inputs[i]);
    d.targets.push_back(targets[i]);
  }
  return d;
}

/// One fold (or the final refit) after both streams are trained.
struct StreamStage {
  TrainedModel model;  // fusion not yet fitted
  StreamHistories history;
  SampleSet samples;   // normalized with this stage's parameters
  std::vector<std::size_t> train;
  std::vector<std::size_t> score;
  std::vector<double> score_p1, score_p2;  // normalized stream outputs on `score`
};

StreamStage fit_streams(const AlignedDataset& data, const FoldSplit& split, std::vector<std::size_t> score,
                        const PgruConfig& cfg, std::uint64_t task_id) {
  StreamStage st;
  st.model.config = cfg;
  std::tie(st.model.price_norm, st.model.struct_norm) = fit_normalization(data, split, cfg);
  st.samples = build_windows(normalize(data, st.model.price_norm, st.model.struct_norm), cfg.window);
  st.train = split.train;
  std::ranges::sort(st.train);
  st.score = std::move(score);

  // The chronologically last share of the training windows picks the best epoch.
  const std::span<const std::size_t> train(st.train);
  std::size_t inner =
      static_cast<std::size_t>(std::floor(cfg.inner_valid_fraction * static_cast<double>(train.size())));
  if (inner >= train.size()) inner = 0;
  std::vector<std::size_t> fit_v(train.begin(), train.end() - static_cast<std::ptrdiff_t>(inner));
  std::vector<std::size_t> inner_v(train.end() - static_cast<std::ptrdiff_t>(inner), train.end());
  const std::span<const std::size_t> fit_idx(fit_v), inner_idx(inner_v);

  const SeededRng root(cfg.seed);
  const std::uint64_t base = task_id * 8;
  auto train_one = [&](const std::vector<Matrix>& inputs, std::size_t dim, std::uint64_t s) {
    SeededRng init = root.substream(base + s);
    return train_stream(StreamNetwork::create(cfg.stream_spec(dim), init),
                        stream_view(inputs, st.samples.targets, fit_idx),
                        stream_view(inputs, st.samples.targets, inner_idx),
                        cfg.train_config(root.substream(base + 2 + s).next_u64()));
  };
  auto price_fit = train_one(st.samples.price_inputs, kPriceFeatures, 0);
  auto struct_fit = train_one(st.samples.structural_inputs, kStructFeatures, 1);
  st.model.price_stream = std::move(price_fit.network);
  st.model.struct_stream = std::move(struct_fit.network);
  st.history.price = std::move(price_fit.history);
  st.history.structural = std::move(struct_fit.history);

  st.score_p1 = stream_predictions(st.model.price_stream, stream_view(st.samples.price_inputs, st.samples.targets, st.score));
  st.score_p2 =
      stream_predictions(st.model.struct_stream, stream_view(st.samples.structural_inputs, st.samples.targets, st.score));
  return st;
}

struct FoldOutcome {
  std::size_t n_train = 0;
  // Raw-unit values for each scored window.
  std::vector<Date> dates;
  std::vector<double> truth, fused, persistence, price_only, struct_only;
};

/// Raw-unit out-of-fold stream predictions, indexed by sample.
struct OutOfFold {
  std::vector<double> price, structural;
  std::vector<std::size_t> fold;  // fold that validated each sample
};

void fit_fusion(StreamStage& st, const OutOfFold& oof, const PgruConfig& cfg,
                std::uint64_t task_id) {
  const auto& pn = st.model.price_norm;
  const auto& samples = st.samples;
  std::vector<double> p1, p2;
  if (cfg.fusion_inputs == FusionInputs::OutOfFold) {
    for (const auto i : st.train) {
      p1.push_back(pn.apply(0, oof.price[i]));
      p2.push_back(pn.apply(0, oof.structural[i]));
    }
  } else {
    p1 = stream_predictions(st.model.price_stream, stream_view(samples.price_inputs, samples.targets, st.train));
    p2 = stream_predictions(st.model.struct_stream, stream_view(samples.structural_inputs, samples.targets, st.train));
  }
  SeededRng rng = SeededRng(cfg.seed).substream(task_id * 8 + 4);
  auto fusion = FusionNetwork::create(cfg.fusion, rng);

  // Pairs held out to stop LM early. With out-of-fold inputs the holdout is
  // one whole fold, so it measures transfer to a stream model the fusion has
  // not seen; otherwise it is a seeded random share.
  const std::size_t n = st.train.size();
  std::vector<char> held(n, 0);
  SeededRng split_rng = SeededRng(cfg.seed).substream(task_id * 8 + 5);
  if (cfg.fusion_holdout_fraction > 0) {
    std::vector<std::size_t> groups;
    if (cfg.fusion_inputs == FusionInputs::OutOfFold) {
      for (const auto i : st.train) groups.push_back(oof.fold[i]);
      std::ranges::sort(groups);
      groups.erase(std::unique(groups.begin(), groups.end()), groups.end());
    }
    if (groups.size() >= 2) {
      const std::size_t g = groups[split_rng.below(groups.size())];
      for (std::size_t i = 0; i < n; ++i) held[i] = oof.fold[st.train[i]] == g;
    } else {
      const auto n_rand = static_cast<std::size_t>(std::floor(cfg.fusion_holdout_fraction * static_cast<double>(n)));
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
      for (std::size_t i = 0; i < n_rand; ++i) held[order[i]] = 1;
    }
  }
  std::size_t n_hold = static_cast<std::size_t>(std::ranges::count(held, 1));
  if (n - n_hold < fusion.parameter_count() + 1 || n_hold < 2) {
    std::ranges::fill(held, 0);
    n_hold = 0;
  }

  Matrix fit_inputs(n - n_hold, 2), hold_inputs(n_hold, 2);
  std::vector<double> fit_targets, hold_targets;
  for (std::size_t i = 0; i < n; ++i) {
    Matrix& dst = held[i] ? hold_inputs : fit_inputs;
    auto& tgt = held[i] ? hold_targets : fit_targets;
    dst(tgt.size(), 0) = p1[i];
    dst(tgt.size(), 1) = p2[i];
    tgt.push_back(samples.targets[st.train[i]]);
  }
  if (n_hold > 0) {
    const LmHoldout holdout{hold_inputs, hold_targets};
    st.model.fusion = train_fusion(std::move(fusion), fit_inputs, fit_targets, cfg.lm, &holdout).fusion;
  } else {
    st.model.fusion = train_fusion(std::move(fusion), fit_inputs, fit_targets, cfg.lm).fusion;
  }
}

FoldOutcome score_stage(const AlignedDataset& data, const StreamStage& st) {
  FoldOutcome out;
  out.n_train = st.train.size();
  const auto& pn = st.model.price_norm;
  for (std::size_t j = 0; j < st.score.size(); ++j) {
    const std::size_t target_row = st.samples.target_row(st.score[j]);
    out.dates.push_back(st.samples.target_dates[st.score[j]]);
    out.truth.push_back(data.price(target_row, 0));
    out.persistence.push_back(data.price(target_row - 1, 0));
    out.fused.push_back(pn.invert(0, st.model.fusion.predict(st.score_p1[j], st.score_p2[j])));
    out.price_only.push_back(pn.invert(0, st.score_p1[j]));
    out.struct_only.push_back(pn.invert(0, st.score_p2[j]));
  }
  return out;
}

FoldMetrics summarize(std::string label, std::size_t n_train, const std::vector<double>& truth,
                      const std::vector<double>& fused, const std::vector<double>& persistence,
                      const std::vector<double>& price_only, const std::vector<double>& struct_only) {
  FoldMetrics m;
  m.fold = std::move(label);
  m.n_train = n_train;
  m.n_valid = truth.size();
  m.fused = compute_metrics(truth, fused);
  m.persistence = compute_metrics(truth, persistence);
  m.price_stream = compute_metrics(truth, price_only);
  m.struct_stream = compute_metrics(truth, struct_only);
  return m;
}

/// Runs body(f) for f in [0, count) under the job cap, labelling errors.
void run_stage(std::size_t count, std::size_t folds, std::size_t jobs, const std::function<void(std::size_t)>& body) {
  std::vector<std::function<void()>> tasks;
  for (std::size_t f = 0; f < count; ++f) {
    tasks.emplace_back([&, f] {
      try {
        body(f);
      } catch (const Error& e) {
        throw e.with_context(f < folds ? fmt::format("fold {}", f) : std::string("final refit"));
      }
    });
  }
  run_tasks(tasks, jobs);
}

}  // namespace

TrainResult train_pgru(const AlignedDataset& data, const PgruConfig& cfg) {
  const auto splits = plan_cv(data, cfg);
  const std::size_t k = splits.size();
  const std::size_t n_samples = window_starts(data, cfg.window).size();

  FoldSplit everything;
  everything.train.resize(n_samples);
  std::iota(everything.train.begin(), everything.train.end(), std::size_t{0});
  everything.norm_rows.resize(data.size());
  std::iota(everything.norm_rows.begin(), everything.norm_rows.end(), std::size_t{0});

  // Stage 1: streams for every fold plus the final refit.
  std::vector<StreamStage> stages(k + 1);
  run_stage(k + 1, k, cfg.jobs, [&](std::size_t f) {
    stages[f] = f < k ? fit_streams(data, splits[f], splits[f].valid, cfg, f)
                      : fit_streams(data, everything, everything.train, cfg, f);
  });

  // Every sample is validated by exactly one fold, giving one honest
  // prediction per sample from streams that never trained on it.
  OutOfFold oof{std::vector<double>(n_samples, 0.0), std::vector<double>(n_samples, 0.0),
                std::vector<std::size_t>(n_samples, 0)};
  for (std::size_t f = 0; f < k; ++f) {
    const auto& st = stages[f];
    for (std::size_t j = 0; j < st.score.size(); ++j) {
      oof.price[st.score[j]] = st.model.price_norm.invert(0, st.score_p1[j]);
      oof.structural[st.score[j]] = st.model.price_norm.invert(0, st.score_p2[j]);
      oof.fold[st.score[j]] = f;
    }
  }

  // Stage 2: fusion fits and scoring.
  std::vector<FoldOutcome> outcomes(k + 1);
  run_stage(k + 1, k, cfg.jobs, [&](std::size_t f) {
    fit_fusion(stages[f], oof, cfg, f);
    outcomes[f] = score_stage(data, stages[f]);
  });

  TrainResult result;
  std::vector<double> truth, fused, persistence, price_only, struct_only;
  std::size_t train_total = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const auto& o = outcomes[f];
    result.cv.folds.push_back(summarize(std::to_string(f), o.n_train, o.truth, o.fused, o.persistence,
                                        o.price_only, o.struct_only));
    result.fold_histories.push_back(stages[f].history);
    truth.insert(truth.end(), o.truth.begin(), o.truth.end());
    fused.insert(fused.end(), o.fused.begin(), o.fused.end());
    persistence.insert(persistence.end(), o.persistence.begin(), o.persistence.end());
    price_only.insert(price_only.end(), o.price_only.begin(), o.price_only.end());
    struct_only.insert(struct_only.end(), o.struct_only.begin(), o.struct_only.end());
    train_total += o.n_train;
  }
  result.cv.aggregate = summarize("all", train_total, truth, fused, persistence, price_only, struct_only);

  const auto& final_fit = outcomes[k];
  result.model = std::move(stages[k].model);
  result.final_history = std::move(stages[k].history);
  for (std::size_t i = 0; i < final_fit.truth.size(); ++i) {
    result.final_trace.push_back({final_fit.dates[i], final_fit.truth[i], final_fit.fused[i]});
  }
  return result;
}

void write_cv_report_csv(std::ostream& out, const CvReport& report) {
  out << "fold,n_train,n_valid,mse,rmse,mae,mape,persistence_mse,persistence_mape,price_stream_mse,"
         "structural_stream_mse\n";
  auto row = [&](const FoldMetrics& m) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{}\n", m.fold, m.n_train, m.n_valid, m.fused.mse, m.fused.rmse,
                       m.fused.mae, m.fused.mape.value_or(0.0), m.persistence.mse, m.persistence.mape.value_or(0.0),
                       m.price_stream.mse, m.struct_stream.mse);
  };
  for (const auto& f : report.folds) row(f);
  row(report.aggregate);
}

// ---------------------------------------------------------------------------
// Inference

double predict_normalized(const TrainedModel& model, const Matrix& price_window, const Matrix& struct_window) {
  const std::size_t w = model.config.window;
  if (price_window.rows() != w || price_window.cols() != kPriceFeatures) {
    fail(ErrorKind::Shape, "price window must be {}x{}, got {}", w, kPriceFeatures, price_window.shape_string());
  }
  if (struct_window.rows() != w || struct_window.cols() != kStructFeatures) {
    fail(ErrorKind::Shape, "structural window must be {}x{}, got {}", w, kStructFeatures,
         struct_window.shape_string());
  }
  ForwardCache cache;
  const double p1 = stream_forward(model.price_stream, zscore_apply(model.price_norm, price_window), cache);
  const double p2 = stream_forward(model.struct_stream, zscore_apply(model.struct_norm, struct_window), cache);
  return model.fusion.predict(p1, p2);
}

double predict_next(const TrainedModel& model, const Matrix& price_window, const Matrix& struct_window) {
  return model.price_norm.invert(0, predict_normalized(model, price_window, struct_window));
}

ForecastResult forecast_horizon(const TrainedModel& model, const AlignedDataset& history, std::size_t horizon,
                                std::span<const double> truth) {
  const std::size_t w = model.config.window;
  if (horizon < 1) fail(ErrorKind::Domain, "forecast horizon must be at least 1 day");
  if (history.size() < w) fail(ErrorKind::Window, "forecast needs {} history rows, got {}", w, history.size());
  if (!truth.empty() && truth.size() != horizon) {
    fail(ErrorKind::Shape, "{} true values for a {}-day horizon", truth.size(), horizon);
  }
  const AlignedDataset tail = history.slice(history.size() - w, w);
  Matrix price = tail.price;
  Matrix structural = tail.structural;
  const std::vector<double> last_struct(structural.row(w - 1).begin(), structural.row(w - 1).end());

  std::vector<Date> dates;
  std::vector<double> preds;
  for (std::size_t step = 1; step <= horizon; ++step) {
    const double pred = predict_next(model, price, structural);
    preds.push_back(pred);
    dates.push_back(history.dates.back() + std::chrono::days{static_cast<int>(step)});
    // Slide both windows by one row; the new row is synthetic.
    for (std::size_t t = 0; t + 1 < w; ++t) {
      std::ranges::copy(price.row(t + 1), price.row(t).begin());
      std::ranges::copy(structural.row(t + 1), structural.row(t).begin());
    }
    std::ranges::fill(price.row(w - 1), pred);
    std::ranges::copy(last_struct, structural.row(w - 1).begin());
  }

  ForecastResult result;
  if (!truth.empty()) {
    result.days = per_day_errors(dates, truth, preds);
  } else {
    for (std::size_t i = 0; i < preds.size(); ++i) {
      DayError d;
      d.day = i + 1;
      d.date = dates[i];
      d.pred = preds[i];
      result.days.push_back(d);
    }
  }
  return result;
}

ForecastResult evaluate_one_step(const TrainedModel& model, const AlignedDataset& data) {
  const std::size_t w = model.config.window;
  std::vector<Date> dates;
  std::vector<double> truth, preds;
  for (const auto s : window_starts(data, w)) {
    const AlignedDataset win = data.slice(s, w);
    preds.push_back(predict_next(model, win.price, win.structural));
    truth.push_back(data.price(s + w, 0));
    dates.push_back(data.dates[s + w]);
  }
  return ForecastResult{per_day_errors(dates, truth, preds)};
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

constexpr std::string_view kCheckpointTag = "pgru-checkpoint";
constexpr int kCheckpointVersion = 1;

void write_norm(std::ostream& out, std::string_view name, const NormParams& p) {
  out << fmt::format("norm {} {} {}\n", name, scaling_name(p.scaling), p.columns());
  out << fmt::format("center {}\n", fmt::join(p.center, " "));
  out << fmt::format("scale {}\n", fmt::join(p.scale, " "));
}

void write_tensor(std::ostream& out, const std::string& name, const Matrix& m) {
  out << fmt::format("tensor {} {} {}\n", name, m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) out << fmt::format("{}\n", fmt::join(m.row(r), " "));
}

class LineReader {
public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::vector<std::string> next(std::string_view expect_keyword = {}) {
    std::string line;
    if (!std::getline(in_, line)) fail(ErrorKind::Parse, "checkpoint ended early after line {}", line_);
    ++line_;
    std::istringstream ss(line);
    std::vector<std::string> words;
    for (std::string w; ss >> w;) words.push_back(w);
    if (!expect_keyword.empty() && (words.empty() || words[0] != expect_keyword)) {
      fail(ErrorKind::Parse, "checkpoint line {}: expected '{}'", line_, expect_keyword);
    }
    return words;
  }
  std::string raw_line() {
    std::string line;
    if (!std::getline(in_, line)) fail(ErrorKind::Parse, "checkpoint ended early after line {}", line_);
    ++line_;
    return line;
  }
  std::size_t line() const { return line_; }

private:
  std::istream& in_;
  std::size_t line_ = 0;
};

double to_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorKind::Parse, "checkpoint line {}: bad number '{}'", line, s);
  }
  return v;
}

std::size_t to_size(const std::string& s, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    fail(ErrorKind::Parse, "checkpoint line {}: bad count '{}'", line, s);
  }
  return v;
}

NormParams read_norm(LineReader& r, std::string_view name, std::size_t columns) {
  const auto head = r.next("norm");
  if (head.size() != 4 || head[1] != name || to_size(head[3], r.line()) != columns) {
    fail(ErrorKind::Parse, "checkpoint line {}: expected norm {} with {} columns", r.line(), name, columns);
  }
  NormParams p;
  p.scaling = parse_enum<Scaling>(head[2], {{"zscore", Scaling::ZScore}, {"minmax", Scaling::MinMax}}, "scaling");
  for (const char* key : {"center", "scale"}) {
    const auto words = r.next(key);
    if (words.size() != columns + 1) fail(ErrorKind::Parse, "checkpoint line {}: expected {} values", r.line(), columns);
    auto& dst = std::string_view(key) == "center" ? p.center : p.scale;
    for (std::size_t i = 1; i < words.size(); ++i) dst.push_back(to_double(words[i], r.line()));
  }
  return p;
}

void read_tensor(LineReader& r, const std::string& name, Matrix& m) {
  const auto head = r.next("tensor");
  if (head.size() != 4 || head[1] != name || to_size(head[2], r.line()) != m.rows() ||
      to_size(head[3], r.line()) != m.cols()) {
    fail(ErrorKind::Parse, "checkpoint line {}: expected tensor {} {}", r.line(), name, m.shape_string());
  }
  std::vector<double> values;
  for (std::size_t row = 0; row < m.rows(); ++row) {
    const auto words = r.next();
    if (words.size() != m.cols()) fail(ErrorKind::Parse, "checkpoint line {}: expected {} values", r.line(), m.cols());
    for (const auto& w : words) values.push_back(to_double(w, r.line()));
  }
  m = Matrix(m.rows(), m.cols(), std::move(values));
}

template <typename Net>
void read_tensors(LineReader& r, Net& net) {
  net.for_each_tensor([&](const std::string& name, Matrix& m) { read_tensor(r, name, m); });
}

}  // namespace

void write_checkpoint(std::ostream& out, const TrainedModel& model) {
  out << fmt::format("{} {}\n", kCheckpointTag, kCheckpointVersion);
  // Thread count is a runtime choice, kept out so checkpoints do not depend on it.
  nlohmann::json config = model.config;
  config.erase("jobs");
  out << "config " << config.dump() << "\n";
  write_norm(out, "price", model.price_norm);
  write_norm(out, "structural", model.struct_norm);
  for (const auto& [name, net] : {std::pair<std::string_view, const StreamNetwork*>{"price", &model.price_stream},
                                  {"structural", &model.struct_stream}}) {
    out << fmt::format("stream {} {} {}\n", name, to_string(net->cell), net->parameter_count());
    net->for_each_tensor([&](const std::string& tensor, const Matrix& m) { write_tensor(out, tensor, m); });
  }
  const auto fs = model.fusion.spec();
  out << fmt::format("fusion {} {} {}\n", fs.hidden, activation_name(fs.activation), model.fusion.parameter_count());
  model.fusion.net.for_each_tensor("layer", [&](const std::string& tensor, const Matrix& m) {
    write_tensor(out, tensor, m);
  });
  out << "end\n";
}

TrainedModel read_checkpoint(std::istream& in) {
  LineReader r(in);
  const auto tag = r.next();
  if (tag.size() != 2 || tag[0] != kCheckpointTag) fail(ErrorKind::Parse, "not a pgru checkpoint");
  if (to_size(tag[1], 1) != kCheckpointVersion) {
    fail(ErrorKind::Parse, "unsupported checkpoint version {}", tag[1]);
  }
  TrainedModel model;
  {
    const std::string line = r.raw_line();
    if (!line.starts_with("config ")) fail(ErrorKind::Parse, "checkpoint line 2: expected config");
    try {
      model.config = nlohmann::json::parse(line.substr(7)).get<PgruConfig>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Parse, "checkpoint config: {}", e.what());
    }
  }
  model.price_norm = read_norm(r, "price", kPriceFeatures);
  model.struct_norm = read_norm(r, "structural", kStructFeatures);

  SeededRng unused(0);
  for (const auto& [name, dim, net] :
       {std::tuple<std::string_view, std::size_t, StreamNetwork*>{"price", kPriceFeatures, &model.price_stream},
        {"structural", kStructFeatures, &model.struct_stream}}) {
    const auto head = r.next("stream");
    if (head.size() != 4 || head[1] != name) fail(ErrorKind::Parse, "checkpoint line {}: expected stream {}", r.line(), name);
    PgruConfig cfg = model.config;
    cfg.cell = parse_cell_type(head[2]);
    *net = StreamNetwork::create(cfg.stream_spec(dim), unused);
    if (net->parameter_count() != to_size(head[3], r.line())) {
      fail(ErrorKind::Parse, "checkpoint line {}: stream {} parameter count mismatch", r.line(), name);
    }
    read_tensors(r, *net);
  }
  const auto fusion_head = r.next("fusion");
  if (fusion_head.size() != 4) fail(ErrorKind::Parse, "checkpoint line {}: malformed fusion header", r.line());
  FusionSpec fs;
  fs.hidden = to_size(fusion_head[1], r.line());
  fs.activation = parse_enum<Activation>(
      fusion_head[2], {{"tanh", Activation::Tanh}, {"identity", Activation::Identity}, {"sigmoid", Activation::Sigmoid}},
      "fusion activation");
  model.fusion = FusionNetwork::create(fs, unused);
  if (model.fusion.parameter_count() != to_size(fusion_head[3], r.line())) {
    fail(ErrorKind::Parse, "checkpoint line {}: fusion parameter count mismatch", r.line());
  }
  model.fusion.net.for_each_tensor("layer", [&](const std::string& name, Matrix& m) { read_tensor(r, name, m); });
  r.next("end");
  return model;
}

std::string dataset_digest(const AlignedDataset& data) {
  std::ostringstream canonical;
  write_price_csv(canonical, price_rows(data));
  write_struct_csv(canonical, struct_rows(data));
  const std::string bytes = canonical.str();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    fail(ErrorKind::Io, "sha256 digest failed");
  }
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

nlohmann::json run_manifest(const TrainedModel& model, const AlignedDataset& data, const CvReport& report) {
  nlohmann::json j;
  j["format"] = "pgru-manifest";
  j["version"] = 1;
  j["config"] = model.config;
  j["cell"] = std::string(to_string(model.config.cell));
  j["seed"] = model.config.seed;
  j["dataset"] = {{"rows", data.size()},
                  {"first", data.dates.empty() ? "" : format_date(data.dates.front())},
                  {"last", data.dates.empty() ? "" : format_date(data.dates.back())},
                  {"sha256", dataset_digest(data)}};
  j["metrics"] = {{"cv", metrics_json(report.aggregate.fused)},
                  {"persistence", metrics_json(report.aggregate.persistence)},
                  {"folds", report.folds.size()}};
  j["parameters"] = {{"price_stream", model.price_stream.parameter_count()},
                     {"structural_stream", model.struct_stream.parameter_count()},
                     {"fusion", model.fusion.parameter_count()}};
  return j;
}

}  // namespace pgru
