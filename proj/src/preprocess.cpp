// SPDX-License-Identifier: Apache-2.0
#include "pgru/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/ranges.h>

#include "pgru/error.hpp"

namespace pgru {

namespace {

std::vector<std::size_t> resolve_rows(const Matrix& columns, std::span<const std::size_t> rows) {
  std::vector<std::size_t> out;
  if (rows.empty()) {
    out.resize(columns.rows());
    std::iota(out.begin(), out.end(), std::size_t{0});
  } else {
    out.assign(rows.begin(), rows.end());
    for (const auto r : out) {
      if (r >= columns.rows()) fail(ErrorKind::Shape, "row {} out of range for {} rows", r, columns.rows());
    }
  }
  if (out.size() < 2) fail(ErrorKind::Domain, "normalization needs at least 2 rows, got {}", out.size());
  return out;
}

void check_columns(const NormParams& params, const Matrix& columns) {
  if (columns.cols() != params.columns()) {
    fail(ErrorKind::Shape, "normalization fitted on {} columns cannot be applied to {}", params.columns(),
         columns.shape_string());
  }
}

}  // namespace

NormParams zscore_fit(const Matrix& columns, std::span<const std::size_t> rows) {
  const auto use = resolve_rows(columns, rows);
  NormParams p;
  p.scaling = Scaling::ZScore;
  const double n = static_cast<double>(use.size());
  for (std::size_t j = 0; j < columns.cols(); ++j) {
    double sum = 0.0;
    for (const auto r : use) sum += columns(r, j);
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto r : use) ss += (columns(r, j) - mean) * (columns(r, j) - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (!(sd > 0.0)) fail(ErrorKind::Degenerate, "column {} is constant (zero variance)", j);
    p.center.push_back(mean);
    p.scale.push_back(sd);
  }
  return p;
}

NormParams minmax_fit(const Matrix& columns, std::span<const std::size_t> rows) {
  const auto use = resolve_rows(columns, rows);
  NormParams p;
  p.scaling = Scaling::MinMax;
  for (std::size_t j = 0; j < columns.cols(); ++j) {
    double lo = columns(use[0], j);
    double hi = lo;
    for (const auto r : use) {
      lo = std::min(lo, columns(r, j));
      hi = std::max(hi, columns(r, j));
    }
    if (!(hi > lo)) fail(ErrorKind::Degenerate, "column {} is constant (zero range)", j);
    p.center.push_back(lo);
    p.scale.push_back(hi - lo);
  }
  return p;
}

NormParams fit_scaling(Scaling scaling, const Matrix& columns, std::span<const std::size_t> rows) {
  return scaling == Scaling::ZScore ? zscore_fit(columns, rows) : minmax_fit(columns, rows);
}

Matrix zscore_apply(const NormParams& params, const Matrix& columns) {
  check_columns(params, columns);
  Matrix out(columns.rows(), columns.cols());
  for (std::size_t i = 0; i < columns.rows(); ++i)
    for (std::size_t j = 0; j < columns.cols(); ++j) out(i, j) = params.apply(j, columns(i, j));
  return out;
}

Matrix zscore_invert(const NormParams& params, const Matrix& z) {
  check_columns(params, z);
  Matrix out(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) out(i, j) = params.invert(j, z(i, j));
  return out;
}

AlignedDataset normalize(const AlignedDataset& raw, const NormParams& price, const NormParams& structural) {
  AlignedDataset out;
  out.dates = raw.dates;
  out.gap_before = raw.gap_before;
  out.price = zscore_apply(price, raw.price);
  out.structural = zscore_apply(structural, raw.structural);
  return out;
}

std::vector<std::size_t> window_starts(const AlignedDataset& data, std::size_t window) {
  const std::size_t n = data.size();
  if (window < 1 || window >= n) {
    fail(ErrorKind::Window, "window length {} requires 1 <= w < n = {}", window, n);
  }
  // gap_count[i] = number of flagged gaps in rows 1..i
  std::vector<std::size_t> gap_count(n, 0);
  for (std::size_t i = 1; i < n; ++i) gap_count[i] = gap_count[i - 1] + (data.gap_before[i] ? 1 : 0);
  std::vector<std::size_t> starts;
  for (std::size_t s = 0; s + window < n; ++s) {
    if (gap_count[s + window] == gap_count[s]) starts.push_back(s);
  }
  return starts;
}

SampleSet build_windows(const AlignedDataset& data, std::size_t window) {
  SampleSet set;
  set.window = window;
  for (const auto s : window_starts(data, window)) {
    Matrix x(window, data.price.cols());
    Matrix y(window, data.structural.cols());
    for (std::size_t t = 0; t < window; ++t) {
      std::ranges::copy(data.price.row(s + t), x.row(t).begin());
      std::ranges::copy(data.structural.row(s + t), y.row(t).begin());
    }
    set.price_inputs.push_back(std::move(x));
    set.structural_inputs.push_back(std::move(y));
    set.targets.push_back(data.price(s + window, 0));
    set.start_rows.push_back(s);
    set.target_dates.push_back(data.dates[s + window]);
  }
  return set;
}

void dump_samples(const SampleSet& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) fail(ErrorKind::Io, "cannot write '{}'", (dir / name).string());
    return out;
  };
  auto in1 = open("input1.csv");
  in1 << "sample,step,avg,open,low,high\n";
  auto in2 = open("input2.csv");
  in2 << "sample,step,block_size,hash_rate,difficulty,tx_count,miner_revenue\n";
  auto target = open("output.csv");
  target << "sample,start_row,target_date,target\n";
  for (std::size_t k = 0; k < samples.size(); ++k) {
    for (std::size_t t = 0; t < samples.window; ++t) {
      in1 << fmt::format("{},{},{}\n", k, t, fmt::join(samples.price_inputs[k].row(t), ","));
      in2 << fmt::format("{},{},{}\n", k, t, fmt::join(samples.structural_inputs[k].row(t), ","));
    }
    target << fmt::format("{},{},{},{}\n", k, samples.start_rows[k], format_date(samples.target_dates[k]),
                          samples.targets[k]);
  }
}

std::vector<std::size_t> FoldPlan::members(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i)
    if (assignments[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldPlan::sizes() const {
  std::vector<std::size_t> out(k, 0);
  for (const auto a : assignments) ++out[a];
  return out;
}

FoldPlan kfold_split(std::size_t n_samples, std::size_t k, FoldScheme scheme, std::uint64_t seed) {
  if (k < 2 || k > n_samples) fail(ErrorKind::Domain, "fold count {} must lie in [2, {}]", k, n_samples);
  std::vector<std::size_t> order(n_samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (scheme == FoldScheme::Shuffled) {
    SeededRng rng(seed);
    for (std::size_t i = n_samples; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  }
  FoldPlan plan;
  plan.k = k;
  plan.assignments.assign(n_samples, 0);
  const std::size_t base = n_samples / k;
  const std::size_t extra = n_samples % k;
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t len = base + (f < extra ? 1 : 0);
    for (std::size_t i = 0; i < len; ++i) plan.assignments[order[pos++]] = f;
  }
  return plan;
}

}  // namespace pgru
