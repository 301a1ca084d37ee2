// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pgru/dataio.hpp"
#include "pgru/ndcore.hpp"

namespace pgru {

enum class Scaling { ZScore, MinMax };

/// Per-column affine normalization z = (x - center) / scale.
/// For z-score, center is the mean and scale the sample standard deviation;
/// for min-max, center is the minimum and scale the range.
struct NormParams {
  Scaling scaling = Scaling::ZScore;
  std::vector<double> center;
  std::vector<double> scale;

  std::size_t columns() const noexcept { return center.size(); }
  double apply(std::size_t column, double x) const { return (x - center[column]) / scale[column]; }
  double invert(std::size_t column, double z) const { return z * scale[column] + center[column]; }
};

/// Fits on the rows listed in `rows` (all rows when empty). Needs at least two rows.
NormParams zscore_fit(const Matrix& columns, std::span<const std::size_t> rows = {});
NormParams minmax_fit(const Matrix& columns, std::span<const std::size_t> rows = {});
NormParams fit_scaling(Scaling scaling, const Matrix& columns, std::span<const std::size_t> rows = {});

Matrix zscore_apply(const NormParams& params, const Matrix& columns);
Matrix zscore_invert(const NormParams& params, const Matrix& z);

/// Normalizes both feature blocks of a dataset; dates and gap flags are kept.
AlignedDataset normalize(const AlignedDataset& raw, const NormParams& price, const NormParams& structural);

/// Windowed supervised samples. Sample k reads rows start[k] .. start[k]+w-1 of
/// both streams and targets the average price (column 0) at row start[k]+w.
struct SampleSet {
  std::size_t window = 0;
  std::vector<Matrix> price_inputs;       // w x 4 each
  std::vector<Matrix> structural_inputs;  // w x 5 each
  std::vector<double> targets;
  std::vector<std::size_t> start_rows;
  std::vector<Date> target_dates;

  std::size_t size() const noexcept { return targets.size(); }
  std::size_t target_row(std::size_t k) const { return start_rows[k] + window; }
};

/// Start rows of every admissible window: [s, s+w] must not cross a flagged gap.
std::vector<std::size_t> window_starts(const AlignedDataset& data, std::size_t window);

SampleSet build_windows(const AlignedDataset& data, std::size_t window);

/// Writes input1.csv, input2.csv and output.csv under `dir`.
void dump_samples(const SampleSet& samples, const std::filesystem::path& dir);

enum class FoldScheme { Block, Shuffled };

struct FoldPlan {
  std::size_t k = 0;
  std::vector<std::size_t> assignments;  // fold index per sample

  std::vector<std::size_t> members(std::size_t fold) const;
  std::vector<std::size_t> sizes() const;
};

/// Block folds are contiguous in sample order; shuffled folds split a seeded
/// permutation. Either way fold sizes differ by at most one and the
/// remainder goes to the first folds.
FoldPlan kfold_split(std::size_t n_samples, std::size_t k, FoldScheme scheme, std::uint64_t seed = 0);

}  // namespace pgru
