// SPDX-License-Identifier: Apache-2.0
#include "pgru/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "pgru/error.hpp"

namespace pgru {

namespace {

using namespace std::chrono;

int parse_fixed_int(std::string_view text, std::string_view whole) {
  int value = 0;
  for (char c : text) {
    if (c < '0' || c > '9') fail(ErrorKind::Parse, "invalid date '{}' (expected YYYY-MM-DD)", whole);
    value = value * 10 + (c - '0');
  }
  return value;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      return fields;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

double parse_number(std::string_view cell, std::string_view column, std::size_t line,
                    std::string_view source) {
  double value = 0.0;
  const auto* begin = cell.data();
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value, std::chars_format::general);
  if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(value)) {
    fail(ErrorKind::Parse, "{}:{}: cannot parse '{}' in column '{}' as a number", source, line, cell,
         column);
  }
  return value;
}

/// Rows of a CSV with the required columns resolved to field indices.
struct CsvTable {
  std::vector<std::size_t> column_index;  // position of each required column in the header
  std::size_t field_count = 0;
  std::vector<std::pair<std::size_t, std::vector<std::string_view>>> rows;  // (line number, fields)
};

template <std::size_t N>
CsvTable read_table(std::string_view text, const std::array<std::string_view, N>& required,
                    std::string_view source) {
  if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);
  CsvTable table;
  std::size_t line_no = 0;
  bool have_header = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_fields(line);
    if (!have_header) {
      have_header = true;
      table.field_count = fields.size();
      for (const auto name : required) {
        const auto it = std::find(fields.begin(), fields.end(), name);
        if (it == fields.end()) fail(ErrorKind::Schema, "{}: header is missing column '{}'", source, name);
        table.column_index.push_back(static_cast<std::size_t>(it - fields.begin()));
      }
      continue;
    }
    if (fields.size() != table.field_count) {
      fail(ErrorKind::Parse, "{}:{}: expected {} fields, found {}", source, line_no, table.field_count,
           fields.size());
    }
    table.rows.emplace_back(line_no, std::move(fields));
  }
  if (!have_header) fail(ErrorKind::Schema, "{}: file is empty (no header row)", source);
  return table;
}

template <typename Row, std::size_t N, typename Build>
std::vector<Row> parse_rows(std::string_view text, const std::array<std::string_view, N>& columns,
                            std::string_view source, Build build) {
  const CsvTable table = read_table(text, columns, source);
  std::vector<Row> out;
  out.reserve(table.rows.size());
  for (const auto& [line, fields] : table.rows) {
    Date date;
    try {
      date = parse_date(fields[table.column_index[0]]);
    } catch (const Error& e) {
      fail(ErrorKind::Parse, "{}:{}: {}", source, line, e.what());
    }
    std::array<double, N - 1> values{};
    for (std::size_t c = 1; c < N; ++c) {
      values[c - 1] = parse_number(fields[table.column_index[c]], columns[c], line, source);
    }
    Row row = build(date, values);
    validate(row);
    out.push_back(row);
  }
  return out;
}

void check_unique_dates(const std::vector<Date>& dates, std::string_view what) {
  std::set<Date> seen;
  for (const auto d : dates) {
    if (!seen.insert(d).second) {
      fail(ErrorKind::Validation, "duplicate date {} in {} input", format_date(d), what);
    }
  }
}

std::vector<bool> compute_gaps(const std::vector<Date>& dates) {
  std::vector<bool> gaps(dates.size(), false);
  for (std::size_t i = 1; i < dates.size(); ++i) gaps[i] = (dates[i] - dates[i - 1]).count() > 1;
  return gaps;
}

}  // namespace

Date parse_date(std::string_view text) {
  text = trim(text);
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    fail(ErrorKind::Parse, "invalid date '{}' (expected YYYY-MM-DD)", text);
  }
  const year_month_day ymd{year{parse_fixed_int(text.substr(0, 4), text)},
                           month{static_cast<unsigned>(parse_fixed_int(text.substr(5, 2), text))},
                           day{static_cast<unsigned>(parse_fixed_int(text.substr(8, 2), text))}};
  if (!ymd.ok()) fail(ErrorKind::Parse, "invalid calendar date '{}'", text);
  return sys_days{ymd};
}

std::string format_date(Date date) {
  const year_month_day ymd{date};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()),
                     static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
}

void validate(const PriceRow& row) {
  const auto when = format_date(row.date);
  if (!(row.avg > 0 && row.open > 0 && row.low > 0 && row.high > 0)) {
    fail(ErrorKind::Validation, "{}: prices must be positive", when);
  }
  if (!(row.low <= row.high)) fail(ErrorKind::Validation, "{}: low {} exceeds high {}", when, row.low, row.high);
  if (!(row.low <= row.avg && row.avg <= row.high)) {
    fail(ErrorKind::Validation, "{}: avg {} outside [low {}, high {}]", when, row.avg, row.low, row.high);
  }
  if (!(row.low <= row.open && row.open <= row.high)) {
    fail(ErrorKind::Validation, "{}: open {} outside [low {}, high {}]", when, row.open, row.low, row.high);
  }
}

void validate(const StructRow& row) {
  const auto when = format_date(row.date);
  if (!(row.block_size > 0 && row.hash_rate > 0 && row.difficulty > 0 && row.tx_count > 0 &&
        row.miner_revenue > 0)) {
    fail(ErrorKind::Validation, "{}: structural features must be positive", when);
  }
  if (row.tx_count != std::floor(row.tx_count)) {
    fail(ErrorKind::Validation, "{}: tx_count {} is not an integer", when, row.tx_count);
  }
}

std::vector<PriceRow> parse_price_csv(std::string_view text, std::string_view source) {
  return parse_rows<PriceRow>(text, kPriceColumns, source, [](Date d, const auto& v) {
    return PriceRow{d, v[0], v[1], v[2], v[3]};
  });
}

std::vector<StructRow> parse_struct_csv(std::string_view text, std::string_view source) {
  return parse_rows<StructRow>(text, kStructColumns, source, [](Date d, const auto& v) {
    return StructRow{d, v[0], v[1], v[2], v[3], v[4]};
  });
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open '{}'", path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::vector<PriceRow> load_price_csv(const std::filesystem::path& path) {
  return parse_price_csv(read_text_file(path), path.string());
}

std::vector<StructRow> load_struct_csv(const std::filesystem::path& path) {
  return parse_struct_csv(read_text_file(path), path.string());
}

void write_price_csv(std::ostream& out, const std::vector<PriceRow>& rows) {
  out << "date,avg,open,low,high\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{}\n", format_date(r.date), r.avg, r.open, r.low, r.high);
  }
}

void write_struct_csv(std::ostream& out, const std::vector<StructRow>& rows) {
  out << "date,block_size,hash_rate,difficulty,tx_count,miner_revenue\n";
  for (const auto& r : rows) {
    out << fmt::format("{},{},{},{},{},{}\n", format_date(r.date), r.block_size, r.hash_rate,
                       r.difficulty, r.tx_count, r.miner_revenue);
  }
}

AlignedDataset AlignedDataset::slice(std::size_t first, std::size_t count) const {
  if (first + count > size()) {
    fail(ErrorKind::Shape, "slice [{}, {}) exceeds dataset of {} rows", first, first + count, size());
  }
  AlignedDataset out;
  out.dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(first),
                   dates.begin() + static_cast<std::ptrdiff_t>(first + count));
  out.price = Matrix(count, price.cols());
  out.structural = Matrix(count, structural.cols());
  for (std::size_t i = 0; i < count; ++i) {
    std::ranges::copy(price.row(first + i), out.price.row(i).begin());
    std::ranges::copy(structural.row(first + i), out.structural.row(i).begin());
  }
  out.gap_before = compute_gaps(out.dates);
  return out;
}

AlignedDataset align(const std::vector<PriceRow>& price, const std::vector<StructRow>& structural) {
  if (price.empty() || structural.empty()) fail(ErrorKind::Alignment, "cannot align an empty input");
  std::vector<Date> pd, sd;
  for (const auto& r : price) pd.push_back(r.date);
  for (const auto& r : structural) sd.push_back(r.date);
  check_unique_dates(pd, "price");
  check_unique_dates(sd, "structural");

  std::map<Date, const StructRow*> by_date;
  for (const auto& r : structural) by_date.emplace(r.date, &r);
  std::vector<std::pair<const PriceRow*, const StructRow*>> matched;
  for (const auto& r : price) {
    if (const auto it = by_date.find(r.date); it != by_date.end()) matched.emplace_back(&r, it->second);
  }
  if (matched.empty()) fail(ErrorKind::Alignment, "price and structural inputs share no dates");
  std::ranges::sort(matched, {}, [](const auto& m) { return m.first->date; });

  AlignedDataset out;
  const std::size_t n = matched.size();
  out.price = Matrix(n, kPriceFeatures);
  out.structural = Matrix(n, kStructFeatures);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& [p, s] = matched[i];
    out.dates.push_back(p->date);
    auto pr = out.price.row(i);
    pr[0] = p->avg;
    pr[1] = p->open;
    pr[2] = p->low;
    pr[3] = p->high;
    auto sr = out.structural.row(i);
    sr[0] = s->block_size;
    sr[1] = s->hash_rate;
    sr[2] = s->difficulty;
    sr[3] = s->tx_count;
    sr[4] = s->miner_revenue;
  }
  out.gap_before = compute_gaps(out.dates);
  return out;
}

std::vector<PriceRow> price_rows(const AlignedDataset& data) {
  std::vector<PriceRow> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = data.price.row(i);
    rows.push_back({data.dates[i], r[0], r[1], r[2], r[3]});
  }
  return rows;
}

std::vector<StructRow> struct_rows(const AlignedDataset& data) {
  std::vector<StructRow> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto r = data.structural.row(i);
    rows.push_back({data.dates[i], r[0], r[1], r[2], r[3], r[4]});
  }
  return rows;
}

LoadReport make_load_report(const std::vector<PriceRow>& price, const std::vector<StructRow>& structural,
                            const AlignedDataset& aligned) {
  LoadReport report;
  report.price_rows = price.size();
  report.struct_rows = structural.size();
  report.aligned_rows = aligned.size();
  if (!aligned.dates.empty()) {
    report.first = aligned.dates.front();
    report.last = aligned.dates.back();
  }
  for (std::size_t i = 1; i < aligned.size(); ++i) {
    if (aligned.gap_before[i]) report.gaps.emplace_back(aligned.dates[i - 1], aligned.dates[i]);
  }
  return report;
}

std::string format_load_report(const LoadReport& report) {
  std::string out;
  out += fmt::format("price rows:      {}\n", report.price_rows);
  out += fmt::format("structural rows: {}\n", report.struct_rows);
  out += fmt::format("aligned rows:    {}\n", report.aligned_rows);
  out += fmt::format("date range:      {} .. {}\n", format_date(report.first), format_date(report.last));
  out += fmt::format("gaps:            {}\n", report.gaps.size());
  for (const auto& [before, after] : report.gaps) {
    out += fmt::format("  {} -> {} ({} missing days)\n", format_date(before), format_date(after),
                       (after - before).count() - 1);
  }
  return out;
}

AlignedDataset load_dataset(const std::filesystem::path& price_csv,
                            const std::filesystem::path& struct_csv, LoadReport* report) {
  const auto price = load_price_csv(price_csv);
  const auto structural = load_struct_csv(struct_csv);
  auto aligned = align(price, structural);
  if (report) *report = make_load_report(price, structural, aligned);
  return aligned;
}

}  // namespace pgru
