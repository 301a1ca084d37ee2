// SPDX-License-Identifier: Apache-2.0
#include "pgru/ndcore.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>

#include "pgru/error.hpp"

namespace pgru {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::Alignment: return "alignment error";
    case ErrorKind::Window: return "window error";
    case ErrorKind::Degenerate: return "degenerate-column error";
    case ErrorKind::Contract: return "contract error";
    case ErrorKind::Io: return "io error";
  }
  return "error";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Schema:
    case ErrorKind::Parse:
    case ErrorKind::Validation:
    case ErrorKind::Alignment:
    case ErrorKind::Degenerate: return 3;
    case ErrorKind::Shape:
    case ErrorKind::Window: return 4;
    case ErrorKind::Numeric: return 5;
    case ErrorKind::Domain: return 6;
    case ErrorKind::Io: return 7;
    case ErrorKind::Contract: return 8;
  }
  return 1;
}

// ---------------------------------------------------------------------------
// Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
  if (!std::isfinite(fill)) fail(ErrorKind::Numeric, "matrix fill value {} is not finite", fill);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    fail(ErrorKind::Shape, "matrix data length {} does not match {}x{}", data_.size(), rows, cols);
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      fail(ErrorKind::Numeric, "matrix entry ({},{}) is not finite", i / std::max<std::size_t>(cols, 1),
           i % std::max<std::size_t>(cols, 1));
    }
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) fail(ErrorKind::Shape, "ragged row of length {} (expected {})", row.size(), c);
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

std::string Matrix::shape_string() const { return fmt::format("({}x{})", rows_, cols_); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    fail(ErrorKind::Shape, "matmul shape mismatch: {} x {}", a.shape_string(), b.shape_string());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!std::isfinite(out.values()[i])) {
      fail(ErrorKind::Numeric, "matmul produced a non-finite entry at ({},{})", i / out.cols(),
           i % out.cols());
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

double sigmoid(double x) {
  // Split form keeps exp() from overflowing for large |x|.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double activate(Activation f, double x) {
  switch (f) {
    case Activation::Identity: return x;
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Tanh: return std::tanh(x);
  }
  return x;
}

double activation_slope(Activation f, double y) {
  switch (f) {
    case Activation::Identity: return 1.0;
    case Activation::Sigmoid: return y * (1.0 - y);
    case Activation::Tanh: return 1.0 - y * y;
  }
  return 1.0;
}

Matrix map_elementwise(Activation f, const Matrix& a) {
  return map_elementwise([f](double x) { return activate(f, x); }, a);
}

Matrix map_elementwise(const std::function<double(double)>& f, const Matrix& a) {
  Matrix out(a.rows(), a.cols());
  auto dst = out.values();
  const auto src = a.values();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i] = f(src[i]);
    if (!std::isfinite(dst[i])) {
      fail(ErrorKind::Numeric, "elementwise map produced {} at ({},{})", dst[i], i / a.cols(),
           i % a.cols());
    }
  }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    fail(ErrorKind::Shape, "cannot compare {} with {}", a.shape_string(), b.shape_string());
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  return worst;
}

void gemv_acc(const Matrix& m, std::span<const double> x, std::span<double> out) {
  assert(m.cols() == x.size() && m.rows() == out.size());
  const std::size_t cols = m.cols();
  const double* p = m.values().data();
  for (std::size_t i = 0; i < out.size(); ++i, p += cols) {
    double acc = 0.0;
    for (std::size_t j = 0; j < cols; ++j) acc += p[j] * x[j];
    out[i] += acc;
  }
}

void gemv_t_acc(const Matrix& m, std::span<const double> x, std::span<double> out) {
  assert(m.rows() == x.size() && m.cols() == out.size());
  const std::size_t cols = m.cols();
  const double* p = m.values().data();
  for (std::size_t i = 0; i < x.size(); ++i, p += cols) {
    const double xi = x[i];
    for (std::size_t j = 0; j < cols; ++j) out[j] += p[j] * xi;
  }
}

void outer_acc(Matrix& m, std::span<const double> a, std::span<const double> b) {
  assert(m.rows() == a.size() && m.cols() == b.size());
  const std::size_t cols = m.cols();
  double* p = m.values().data();
  for (std::size_t i = 0; i < a.size(); ++i, p += cols) {
    const double ai = a[i];
    for (std::size_t j = 0; j < cols; ++j) p[j] += ai * b[j];
  }
}

void add_to(Matrix& b, std::span<const double> a) {
  assert(b.size() == a.size());
  auto v = b.values();
  for (std::size_t i = 0; i < a.size(); ++i) v[i] += a[i];
}

bool cholesky_solve(const Matrix& a, std::span<const double> rhs, std::vector<double>& x) {
  const std::size_t n = a.rows();
  if (a.cols() != n || rhs.size() != n) {
    fail(ErrorKind::Shape, "cholesky_solve expects a square system, got {} and rhs {}",
         a.shape_string(), rhs.size());
  }
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a(j, j);
    for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
    if (!(diag > 0.0) || !std::isfinite(diag)) return false;
    const double ljj = std::sqrt(diag);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  x.assign(rhs.begin(), rhs.end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x[k];
    x[i] = s / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// SeededRng

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& word : state_) word = splitmix64(sm);
}

std::uint64_t SeededRng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double SeededRng::next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double SeededRng::uniform(double lo, double hi) {
  if (!(lo < hi)) fail(ErrorKind::Domain, "uniform range requires lo < hi, got [{}, {})", lo, hi);
  const double v = lo + (hi - lo) * next_unit();
  // lo + (hi-lo)*u can round up to hi when u is just below 1.
  return v < hi ? v : std::nextafter(hi, lo);
}

double SeededRng::normal() {
  double u1 = next_unit();
  while (u1 <= 0.0) u1 = next_unit();
  const double u2 = next_unit();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t SeededRng::below(std::size_t n) {
  if (n == 0) fail(ErrorKind::Domain, "below(0) has no valid outcome");
  // Reject the low tail so the modulo is unbiased.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return static_cast<std::size_t>(r % bound);
  }
}

SeededRng SeededRng::substream(std::uint64_t stream_id) const {
  std::uint64_t mix = seed_ ^ (0xD1B54A32D192ED03ull * (stream_id + 1));
  return SeededRng(splitmix64(mix));
}

std::vector<double> rng_uniform(SeededRng& rng, std::size_t n, double lo, double hi) {
  if (!(lo < hi)) fail(ErrorKind::Domain, "rng_uniform requires lo < hi, got [{}, {})", lo, hi);
  std::vector<double> out(n);
  for (auto& v : out) v = rng.uniform(lo, hi);
  return out;
}

}  // namespace pgru
