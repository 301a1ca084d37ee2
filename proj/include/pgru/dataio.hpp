// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "pgru/ndcore.hpp"

namespace pgru {

using Date = std::chrono::sys_days;

/// Strict YYYY-MM-DD. Throws a parse error on anything else.
Date parse_date(std::string_view text);
std::string format_date(Date date);

struct PriceRow {
  Date date;
  double avg;
  double open;
  double low;
  double high;
};

struct StructRow {
  Date date;
  double block_size;
  double hash_rate;
  double difficulty;
  double tx_count;
  double miner_revenue;
};

inline constexpr std::array<std::string_view, 5> kPriceColumns = {"date", "avg", "open", "low", "high"};
inline constexpr std::array<std::string_view, 6> kStructColumns = {
    "date", "block_size", "hash_rate", "difficulty", "tx_count", "miner_revenue"};
inline constexpr std::size_t kPriceFeatures = 4;
inline constexpr std::size_t kStructFeatures = 5;

/// Row invariants; throw a validation error citing the row's date.
void validate(const PriceRow& row);
void validate(const StructRow& row);

/// Parsers take the whole CSV text; `source` only labels error messages.
/// Columns are located by header name, so extra columns and column order are tolerated.
std::vector<PriceRow> parse_price_csv(std::string_view text, std::string_view source = "<memory>");
std::vector<StructRow> parse_struct_csv(std::string_view text, std::string_view source = "<memory>");

std::vector<PriceRow> load_price_csv(const std::filesystem::path& path);
std::vector<StructRow> load_struct_csv(const std::filesystem::path& path);

void write_price_csv(std::ostream& out, const std::vector<PriceRow>& rows);
void write_struct_csv(std::ostream& out, const std::vector<StructRow>& rows);

/// Date-aligned pair of feature series. Row i of `price` and `structural`
/// belong to dates[i]. gap_before[i] marks that one or more calendar days are
/// missing between dates[i-1] and dates[i].
struct AlignedDataset {
  std::vector<Date> dates;
  Matrix price;       // n x 4: avg, open, low, high
  Matrix structural;  // n x 5: block_size, hash_rate, difficulty, tx_count, miner_revenue
  std::vector<bool> gap_before;

  std::size_t size() const noexcept { return dates.size(); }
  /// Rows [first, first + count) as a new dataset; gap flags are recomputed.
  AlignedDataset slice(std::size_t first, std::size_t count) const;
};

/// Intersection of both inputs by date, ascending.
AlignedDataset align(const std::vector<PriceRow>& price, const std::vector<StructRow>& structural);

std::vector<PriceRow> price_rows(const AlignedDataset& data);
std::vector<StructRow> struct_rows(const AlignedDataset& data);

struct LoadReport {
  std::size_t price_rows = 0;
  std::size_t struct_rows = 0;
  std::size_t aligned_rows = 0;
  Date first{};
  Date last{};
  /// (last date before the gap, first date after it)
  std::vector<std::pair<Date, Date>> gaps;
};

LoadReport make_load_report(const std::vector<PriceRow>& price, const std::vector<StructRow>& structural,
                            const AlignedDataset& aligned);
std::string format_load_report(const LoadReport& report);

/// Loads, validates and aligns both files.
AlignedDataset load_dataset(const std::filesystem::path& price_csv,
                            const std::filesystem::path& struct_csv, LoadReport* report = nullptr);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace pgru
