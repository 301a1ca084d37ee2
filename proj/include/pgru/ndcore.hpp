// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace pgru {

/// Dense row-major matrix of doubles. Column vectors are n x 1 matrices.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of `data`; throws if the length is not rows*cols or a value is not finite.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix column(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  void fill(double value);
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

double sigmoid(double x);

enum class Activation { Identity, Sigmoid, Tanh };

double activate(Activation f, double x);
/// Derivative expressed through the activation's output value y = f(x).
double activation_slope(Activation f, double y);

Matrix map_elementwise(Activation f, const Matrix& a);
/// Throws a numeric error naming the first index whose output is not finite.
Matrix map_elementwise(const std::function<double(double)>& f, const Matrix& a);

/// Largest absolute entry of a - b. Shapes must agree.
double max_abs_diff(const Matrix& a, const Matrix& b);

// Raw kernels used by the recurrent and dense layers. No shape checks beyond
// debug asserts; callers own the invariants.

/// out += m * x
void gemv_acc(const Matrix& m, std::span<const double> x, std::span<double> out);
/// out += m^T * x
void gemv_t_acc(const Matrix& m, std::span<const double> x, std::span<double> out);
/// m += a * b^T
void outer_acc(Matrix& m, std::span<const double> a, std::span<const double> b);
/// accumulates column vector `b` += a
void add_to(Matrix& b, std::span<const double> a);

/// Solves a x = rhs for a symmetric positive-definite `a` via Cholesky.
/// Returns false when `a` is not numerically positive definite.
bool cholesky_solve(const Matrix& a, std::span<const double> rhs, std::vector<double>& x);

/// xoshiro256** seeded through splitmix64. Output is identical on every
/// platform for a given seed.
class SeededRng {
public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double next_unit();
  /// Uniform in [lo, hi). Throws a domain error unless lo < hi.
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller on next_unit().
  double normal();
  std::size_t below(std::size_t n);

  /// Independent generator derived from (seed, stream_id); does not advance this one.
  SeededRng substream(std::uint64_t stream_id) const;

private:
  std::uint64_t seed_;
  std::uint64_t state_[4];
};

std::vector<double> rng_uniform(SeededRng& rng, std::size_t n, double lo, double hi);

}  // namespace pgru
