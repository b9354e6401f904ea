#pragma once

// Dense row-major matrices and a jittered Cholesky factorization. Sizes in
// this library are small (tens to a few hundred), so everything is plain
// loops over contiguous storage.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace gapa {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  /// Takes ownership of row-major `values`. Throws ShapeError on a length
  /// mismatch and DomainError on non-finite entries.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix column(std::span<const double> values);
  static Matrix diagonal(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);
std::vector<double> matvec(const Matrix& a, std::span<const double> x);
/// a * b * a^T, the congruence used for covariance pushes.
Matrix congruence(const Matrix& a, const Matrix& b);
double norm_inf(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

struct CholeskyFactor {
  Matrix lower;
  double jitter_used = 0.0;

  std::size_t dim() const { return lower.rows(); }
};

/// Jitter levels relative to tr(A)/n tried in order by cholesky() when no
/// explicit schedule is given: 0, 1e-10, 1e-8, 1e-6.
std::vector<double> default_jitter_schedule(const Matrix& a);

/// Factors (A + A^T)/2 + jitter*I with the first jitter from `jitter_schedule`
/// (absolute values) that succeeds. An empty schedule selects
/// default_jitter_schedule(a).
CholeskyFactor cholesky(const Matrix& a, std::span<const double> jitter_schedule = {});

/// Solves (A + jitter*I) X = B.
Matrix cholesky_solve(const CholeskyFactor& factor, const Matrix& b);
std::vector<double> cholesky_solve(const CholeskyFactor& factor, std::span<const double> b);

/// In-place L y = b.
void forward_substitute(const Matrix& lower, std::span<double> b);
/// In-place L^T y = b.
void back_substitute_transposed(const Matrix& lower, std::span<double> b);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace gapa
