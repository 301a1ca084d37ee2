// SPDX-License-Identifier: Apache-2.0
#include "pgru/metrics.hpp"

#include <cmath>
#include <ostream>

#include "pgru/error.hpp"

namespace pgru {

namespace {

void check_lengths(std::size_t truth, std::size_t pred) {
  if (truth != pred) fail(ErrorKind::Shape, "{} true values for {} predictions", truth, pred);
}

}  // namespace

MetricsReport compute_metrics(std::span<const double> truth, std::span<const double> pred, bool with_mape) {
  check_lengths(truth.size(), pred.size());
  if (truth.empty()) fail(ErrorKind::Domain, "metrics need at least one observation");
  double se = 0.0, ae = 0.0, ape = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = truth[i] - pred[i];
    se += e * e;
    ae += std::abs(e);
    if (with_mape) {
      if (truth[i] == 0.0) fail(ErrorKind::Domain, "MAPE undefined: true value at index {} is zero", i);
      ape += std::abs(e / truth[i]);
    }
  }
  const double n = static_cast<double>(truth.size());
  MetricsReport r;
  r.n = truth.size();
  r.mse = se / n;
  r.rmse = std::sqrt(r.mse);
  r.mae = ae / n;
  if (with_mape) r.mape = 100.0 * ape / n;
  return r;
}

std::vector<DayError> per_day_errors(std::span<const Date> dates, std::span<const double> truth,
                                     std::span<const double> pred) {
  check_lengths(truth.size(), pred.size());
  if (!dates.empty()) check_lengths(dates.size(), pred.size());
  std::vector<DayError> rows;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    DayError row;
    row.day = i + 1;
    if (!dates.empty()) row.date = dates[i];
    row.truth = truth[i];
    row.pred = pred[i];
    row.abs_err = std::abs(truth[i] - pred[i]);
    if (truth[i] == 0.0) fail(ErrorKind::Domain, "percentage error undefined: true value at index {} is zero", i);
    row.abs_pct_err = 100.0 * *row.abs_err / std::abs(truth[i]);
    rows.push_back(row);
  }
  return rows;
}

void write_day_errors_csv(std::ostream& out, const std::vector<DayError>& rows) {
  auto opt = [](const std::optional<double>& v, int digits) {
    return v ? fmt::format("{:.{}f}", *v, digits) : std::string{};
  };
  out << "day,true,pred,abs_err,abs_pct_err\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{:.1f},{},{}\n", r.day, opt(r.truth, 1), r.pred, opt(r.abs_err, 1),
                       opt(r.abs_pct_err, 2));
  }
}

nlohmann::json day_errors_json(const std::vector<DayError>& rows) {
  auto array = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j;
    j["day"] = r.day;
    if (r.date) j["date"] = format_date(*r.date);
    j["true"] = r.truth ? nlohmann::json(*r.truth) : nlohmann::json(nullptr);
    j["pred"] = r.pred;
    j["abs_err"] = r.abs_err ? nlohmann::json(*r.abs_err) : nlohmann::json(nullptr);
    j["abs_pct_err"] = r.abs_pct_err ? nlohmann::json(*r.abs_pct_err) : nlohmann::json(nullptr);
    array.push_back(std::move(j));
  }
  return array;
}

nlohmann::json metrics_json(const MetricsReport& report) {
  nlohmann::json j;
  j["n"] = report.n;
  j["mse"] = report.mse;
  j["rmse"] = report.rmse;
  j["mae"] = report.mae;
  j["mape"] = report.mape ? nlohmann::json(*report.mape) : nlohmann::json(nullptr);
  return j;
}

}  // namespace pgru
