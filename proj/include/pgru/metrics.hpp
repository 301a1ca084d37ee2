// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgru/dataio.hpp"

namespace pgru {

/// Regression errors in raw price units. mape is in percent.
struct MetricsReport {
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> mape;
  std::size_t n = 0;
};

/// Throws a domain error naming the index of a zero true value unless
/// `with_mape` is false, in which case mape is left empty.
MetricsReport compute_metrics(std::span<const double> truth, std::span<const double> pred, bool with_mape = true);

struct DayError {
  std::size_t day = 0;  // 1-based
  std::optional<Date> date;
  std::optional<double> truth;
  double pred = 0.0;
  std::optional<double> abs_err;
  std::optional<double> abs_pct_err;
};

std::vector<DayError> per_day_errors(std::span<const Date> dates, std::span<const double> truth,
                                     std::span<const double> pred);

/// Columns day,true,pred,abs_err,abs_pct_err. Prices and abs_err are printed
/// with one decimal, percentages with two; unknown truth leaves cells empty.
void write_day_errors_csv(std::ostream& out, const std::vector<DayError>& rows);
nlohmann::json day_errors_json(const std::vector<DayError>& rows);
nlohmann::json metrics_json(const MetricsReport& report);

}  // namespace pgru
