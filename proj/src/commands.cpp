// SPDX-License-Identifier: Apache-2.0
#include "pgru/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/ranges.h>

#include "pgru/error.hpp"
#include "pgru/model.hpp"
#include "pgru/synth.hpp"

namespace pgru {

namespace fs = std::filesystem;

std::filesystem::path default_output_dir() {
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return "pgru-out";
}

namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorKind::Io, "cannot create directory {}: {}", dir.string(), ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::Io, "cannot open {} for writing", path.string());
  return f;
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
  auto f = open_out(path);
  writer(f);
  f.close();
  if (!f) fail(ErrorKind::Io, "failed writing {}", path.string());
}

/// Overrides collected from flags; applied on top of the JSON config.
struct ConfigFlags {
  fs::path config_file;
  std::optional<std::size_t> window, hidden, layers, head_width, head_layers, epochs, folds, fusion_hidden, jobs;
  std::optional<std::string> cell, scheme, normalization, scaling, fusion_inputs;
  std::optional<std::uint64_t> seed;
  std::optional<double> lr;
  bool global_normalization = false;

  void attach(CLI::App& cmd) {
    cmd.add_option("--config", config_file, "JSON config file; flags override its values");
    cmd.add_option("--window,-w", window, "window length in days");
    cmd.add_option("--cell", cell, "recurrent cell: gru or lstm");
    cmd.add_option("--hidden", hidden, "recurrent hidden width");
    cmd.add_option("--layers", layers, "stacked recurrent layers per stream");
    cmd.add_option("--head-width", head_width, "dense head width");
    cmd.add_option("--head-layers", head_layers, "dense head hidden layers");
    cmd.add_option("--epochs", epochs, "training epochs per stream");
    cmd.add_option("--folds,-k", folds, "cross-validation folds");
    cmd.add_option("--scheme", scheme, "fold scheme: block or shuffled");
    cmd.add_option("--seed", seed, "master seed");
    cmd.add_option("--lr", lr, "Adam learning rate");
    cmd.add_option("--normalization", normalization, "leakfree or global");
    cmd.add_flag("--global-normalization", global_normalization, "fit normalization once on all rows");
    cmd.add_option("--scaling", scaling, "zscore or minmax");
    cmd.add_option("--fusion-hidden", fusion_hidden, "fusion hidden width (0 = linear)");
    cmd.add_option("--fusion-inputs", fusion_inputs, "out_of_fold or in_sample stream predictions");
    cmd.add_option("--jobs,-j", jobs, "maximum parallel fold tasks");
  }

  PgruConfig resolve() const {
    nlohmann::json j = nlohmann::json::object();
    if (!config_file.empty()) {
      try {
        j = nlohmann::json::parse(read_text_file(config_file));
      } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Parse, "{}: {}", config_file.string(), e.what());
      }
    }
    auto set = [&](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    set("window", window);
    set("cell", cell);
    set("hidden_dim", hidden);
    set("layers", layers);
    set("head_width", head_width);
    set("head_layers", head_layers);
    set("epochs", epochs);
    set("folds", folds);
    set("scheme", scheme);
    set("seed", seed);
    set("normalization", normalization);
    set("scaling", scaling);
    set("fusion_inputs", fusion_inputs);
    set("jobs", jobs);
    if (lr) j["adam"]["lr"] = *lr;
    if (fusion_hidden) j["fusion"]["hidden"] = *fusion_hidden;
    if (global_normalization) j["normalization"] = "global";
    PgruConfig cfg;
    try {
      cfg = j.get<PgruConfig>();
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Parse, "config: {}", e.what());
    }
    validate_config(cfg);
    return cfg;
  }
};

struct DataFlags {
  fs::path price, structural;

  void attach(CLI::App& cmd, bool required = true) {
    auto* p = cmd.add_option("--price", price, "price CSV (date,avg,open,low,high)");
    auto* s = cmd.add_option("--structural", structural, "structural CSV");
    if (required) {
      p->required();
      s->required();
    }
  }
};

// ---------------------------------------------------------------------------

struct ValidateArgs {
  DataFlags data;
  std::size_t window = 15;
  fs::path dump_dir;
};

void cmd_validate(const ValidateArgs& a, std::ostream& out) {
  LoadReport report;
  const auto data = load_dataset(a.data.price, a.data.structural, &report);
  out << format_load_report(report);
  if (!a.dump_dir.empty()) {
    const auto samples = build_windows(data, a.window);
    ensure_dir(a.dump_dir);
    dump_samples(samples, a.dump_dir);
    out << fmt::format("wrote {} samples (w = {}) to {}\n", samples.size(), a.window, a.dump_dir.string());
  }
}

struct SynthArgs {
  std::uint64_t seed = 1;
  std::size_t days = 365;
  std::string profile = "default";
  fs::path out;
};

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  const auto data = synthesize(a.seed, a.days, parse_synth_profile(a.profile));
  const fs::path dir = a.out.empty() ? default_output_dir() : a.out;
  ensure_dir(dir);
  write_file(dir / "price.csv", [&](std::ostream& f) { write_price_csv(f, data.price); });
  write_file(dir / "structural.csv", [&](std::ostream& f) { write_struct_csv(f, data.structural); });
  out << fmt::format("wrote {} days to {}\n", a.days, dir.string());
}

struct TrainArgs {
  DataFlags data;
  ConfigFlags config;
  fs::path out;
};

void write_trace_csv(std::ostream& f, const std::vector<TracePoint>& trace) {
  f << "date,true,pred\n";
  for (const auto& p : trace) f << fmt::format("{},{},{}\n", format_date(p.date), p.truth, p.pred);
}

void cmd_train(const TrainArgs& a, std::ostream& out) {
  const PgruConfig cfg = a.config.resolve();
  const auto data = load_dataset(a.data.price, a.data.structural);
  const auto result = train_pgru(data, cfg);
  const fs::path dir = a.out.empty() ? default_output_dir() : a.out;
  ensure_dir(dir);
  write_file(dir / "checkpoint.txt", [&](std::ostream& f) { write_checkpoint(f, result.model); });
  write_file(dir / "cv_report.csv", [&](std::ostream& f) { write_cv_report_csv(f, result.cv); });
  write_file(dir / "history_price.csv", [&](std::ostream& f) { write_history_csv(f, result.final_history.price); });
  write_file(dir / "history_structural.csv",
             [&](std::ostream& f) { write_history_csv(f, result.final_history.structural); });
  write_file(dir / "train_trace.csv", [&](std::ostream& f) { write_trace_csv(f, result.final_trace); });
  auto manifest = run_manifest(result.model, data, result.cv);
  manifest["files"] = {"checkpoint.txt", "cv_report.csv", "history_price.csv", "history_structural.csv",
                       "train_trace.csv"};
  write_file(dir / "manifest.json", [&](std::ostream& f) { f << manifest.dump(2) << "\n"; });

  const auto& agg = result.cv.aggregate;
  out << fmt::format("cell {} w {} folds {}: cv mse {:.4f} rmse {:.4f} mae {:.4f} mape {:.4f}% "
                     "(persistence mape {:.4f}%)\n",
                     to_string(cfg.cell), cfg.window, cfg.folds, agg.fused.mse, agg.fused.rmse, agg.fused.mae,
                     agg.fused.mape.value_or(0.0), agg.persistence.mape.value_or(0.0));
  out << fmt::format("artifacts in {}\n", dir.string());
}

TrainedModel load_checkpoint(const fs::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorKind::Io, "cannot open checkpoint {}", path.string());
  try {
    return read_checkpoint(f);
  } catch (const Error& e) {
    throw e.with_context(path.string());
  }
}

void write_days(const fs::path& path, const std::vector<DayError>& rows) {
  if (path.extension() == ".json") {
    write_file(path, [&](std::ostream& f) { f << day_errors_json(rows).dump(2) << "\n"; });
  } else {
    write_file(path, [&](std::ostream& f) { write_day_errors_csv(f, rows); });
  }
}

struct ForecastArgs {
  fs::path checkpoint;
  DataFlags data;
  std::size_t horizon = 10;
  bool holdout = false;
  fs::path out;
};

void cmd_forecast(const ForecastArgs& a, std::ostream& out) {
  if (a.horizon < 1) fail(ErrorKind::Domain, "forecast horizon must be at least 1 day");
  const TrainedModel model = load_checkpoint(a.checkpoint);
  const auto data = load_dataset(a.data.price, a.data.structural);
  ForecastResult result;
  if (a.holdout) {
    if (data.size() < a.horizon + model.config.window) {
      fail(ErrorKind::Window, "holdout of {} days needs at least {} rows, got {}", a.horizon,
           a.horizon + model.config.window, data.size());
    }
    const std::size_t cut = data.size() - a.horizon;
    for (std::size_t i = cut; i < data.size(); ++i) {
      if (data.gap_before[i]) fail(ErrorKind::Window, "holdout tail has a date gap before {}", format_date(data.dates[i]));
    }
    std::vector<double> truth;
    for (std::size_t i = cut; i < data.size(); ++i) truth.push_back(data.price(i, 0));
    result = forecast_horizon(model, data.slice(0, cut), a.horizon, truth);
  } else {
    result = forecast_horizon(model, data, a.horizon);
  }
  const fs::path path = a.out.empty() ? default_output_dir() / "forecast.csv" : a.out;
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  write_days(path, result.days);
  write_day_errors_csv(out, result.days);
}

struct EvaluateArgs {
  fs::path checkpoint;
  DataFlags data;
  fs::path out;
};

void cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const TrainedModel model = load_checkpoint(a.checkpoint);
  const auto data = load_dataset(a.data.price, a.data.structural);
  const auto result = evaluate_one_step(model, data);
  std::vector<double> truth, pred;
  for (const auto& d : result.days) {
    truth.push_back(*d.truth);
    pred.push_back(d.pred);
  }
  const auto metrics = compute_metrics(truth, pred);
  const fs::path dir = a.out.empty() ? default_output_dir() : a.out;
  ensure_dir(dir);
  write_days(dir / "one_step.csv", result.days);
  write_file(dir / "metrics.json", [&](std::ostream& f) { f << metrics_json(metrics).dump(2) << "\n"; });
  out << fmt::format("{} windows: mse {:.4f} rmse {:.4f} mae {:.4f} mape {:.4f}%\n", metrics.n, metrics.mse,
                     metrics.rmse, metrics.mae, metrics.mape.value_or(0.0));
}

struct BenchArgs {
  DataFlags data;
  ConfigFlags config;
  std::vector<std::string> cells = {"gru", "lstm"};
  std::vector<std::size_t> windows = {5, 10, 15, 20, 25};
  std::size_t repeats = 3;
  std::size_t synth_days = 400;
  fs::path out;
};

void cmd_bench(const BenchArgs& a, std::ostream& out) {
  if (a.repeats < 3) fail(ErrorKind::Domain, "bench needs at least 3 repeats, got {}", a.repeats);
  PgruConfig base = a.config.resolve();
  base.jobs = 1;  // timings are single-threaded so cells compare fairly
  AlignedDataset data;
  if (!a.data.price.empty() || !a.data.structural.empty()) {
    data = load_dataset(a.data.price, a.data.structural);
  } else {
    const auto synth = synthesize(base.seed, a.synth_days);
    data = align(synth.price, synth.structural);
  }
  std::vector<CellType> cells;
  for (const auto& c : a.cells) cells.push_back(parse_cell_type(c));

  std::ostringstream table;
  table << "cell,window,repeats,mean_seconds\n";
  for (const auto cell : cells) {
    for (const auto w : a.windows) {
      PgruConfig cfg = base;
      cfg.cell = cell;
      cfg.window = w;
      double total = 0.0;
      for (std::size_t r = 0; r < a.repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        (void)train_pgru(data, cfg);
        total += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      }
      table << fmt::format("{},{},{},{:.4f}\n", to_string(cell), w, a.repeats, total / static_cast<double>(a.repeats));
    }
  }
  out << table.str();
  if (!a.out.empty()) {
    if (a.out.has_parent_path()) ensure_dir(a.out.parent_path());
    write_file(a.out, [&](std::ostream& f) { f << table.str(); });
  }
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stream recurrent price forecaster", "pgru"};
  app.require_subcommand(1);

  ValidateArgs validate;
  auto* v = app.add_subcommand("validate", "check and align the two input CSVs");
  validate.data.attach(*v);
  v->add_option("--window,-w", validate.window, "window length for --dump-samples");
  v->add_option("--dump-samples", validate.dump_dir, "write windowed samples to this directory");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "generate a synthetic dataset");
  s->add_option("--seed", synth.seed);
  s->add_option("--days,-n", synth.days);
  s->add_option("--profile", synth.profile, "default, noise-structural or smooth");
  s->add_option("--out,-o", synth.out, "output directory");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "cross-validate and fit a model");
  train.data.attach(*t);
  train.config.attach(*t);
  t->add_option("--out,-o", train.out, "output directory");

  ForecastArgs forecast;
  auto* f = app.add_subcommand("forecast", "recursive multi-day forecast");
  f->add_option("--checkpoint", forecast.checkpoint)->required();
  forecast.data.attach(*f);
  f->add_option("--horizon,-H", forecast.horizon);
  f->add_flag("--holdout", forecast.holdout, "use the last H rows as truth and forecast from before them");
  f->add_option("--out,-o", forecast.out, "output file (.csv or .json)");

  EvaluateArgs evaluate;
  auto* e = app.add_subcommand("evaluate", "one-step predictions over every window");
  e->add_option("--checkpoint", evaluate.checkpoint)->required();
  evaluate.data.attach(*e);
  e->add_option("--out,-o", evaluate.out, "output directory");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "time full training per cell type and window");
  bench.data.attach(*b, false);
  bench.config.attach(*b);
  b->add_option("--cells", bench.cells)->delimiter(',');
  b->add_option("--windows", bench.windows)->delimiter(',');
  b->add_option("--repeats,-r", bench.repeats);
  b->add_option("--synth-days", bench.synth_days, "synthetic rows when no CSVs are given");
  b->add_option("--out,-o", bench.out, "also write the table to this CSV");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    // Help and version exit 0; every other parse failure is a usage error.
    return app.exit(ex, out, err) == 0 ? 0 : 2;
  }

  try {
    if (*v) cmd_validate(validate, out);
    else if (*s) cmd_synth(synth, out);
    else if (*t) cmd_train(train, out);
    else if (*f) cmd_forecast(forecast, out);
    else if (*e) cmd_evaluate(evaluate, out);
    else if (*b) cmd_bench(bench, out);
  } catch (const Error& ex) {
    err << fmt::format("error ({}): {}\n", to_string(ex.kind()), ex.what());
    return exit_code(ex.kind());
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace pgru
