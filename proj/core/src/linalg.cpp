#include "gapa/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gapa/errors.hpp"

namespace gapa {

namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {
  if (!std::isfinite(fill)) throw DomainError("Matrix: non-finite fill value");
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw ShapeError("Matrix: " + std::to_string(values_.size()) + " values for a " +
                     std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw DomainError("Matrix: non-finite entry");
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("Matrix::from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(values));
}

Matrix Matrix::column(std::span<const double> values) {
  return Matrix(values.size(), 1, std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: cannot multiply " + dims(a) + " by " + dims(b));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

std::vector<double> matvec(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) {
    throw ShapeError("matvec: " + dims(a) + " matrix against vector of length " +
                     std::to_string(x.size()));
  }
  std::vector<double> out(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
  return out;
}

Matrix congruence(const Matrix& a, const Matrix& b) {
  if (b.rows() != b.cols() || a.cols() != b.rows()) {
    throw ShapeError("congruence: " + dims(a) + " against " + dims(b));
  }
  Matrix ab = matmul(a, b);
  const std::size_t n = a.rows();
  Matrix out(n, n);
  // Fill the upper triangle and mirror so the result is exactly symmetric.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = dot(ab.row(i), a.row(j));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

double norm_inf(const Matrix& a) {
  double best = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (double v : a.row(i)) s += std::abs(v);
    best = std::max(best, s);
  }
  return best;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError("max_abs_diff: " + dims(a) + " vs " + dims(b));
  }
  double best = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) best = std::max(best, std::abs(av[i] - bv[i]));
  return best;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> default_jitter_schedule(const Matrix& a) {
  const std::size_t n = a.rows();
  double trace = 0.0;
  for (std::size_t i = 0; i < n; ++i) trace += a(i, i);
  double scale = n == 0 ? 1.0 : trace / static_cast<double>(n);
  if (!(scale > 0.0)) scale = 1.0;
  return {0.0, 1e-10 * scale, 1e-8 * scale, 1e-6 * scale};
}

namespace {

// Returns false if a non-positive pivot is met.
bool try_factor(const Matrix& sym, double jitter, Matrix& lower) {
  const std::size_t n = sym.rows();
  lower = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = sym(j, j) + jitter;
    for (std::size_t k = 0; k < j; ++k) d -= lower(j, k) * lower(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    lower(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = sym(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
      lower(i, j) = s / ljj;
    }
  }
  return true;
}

}  // namespace

CholeskyFactor cholesky(const Matrix& a, std::span<const double> jitter_schedule) {
  if (a.rows() != a.cols()) throw ShapeError("cholesky: matrix is " + dims(a) + ", not square");
  const std::size_t n = a.rows();
  const double tol = 1e-8 * (1.0 + norm_inf(a));
  Matrix sym(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(a(i, j) - a(j, i)) > tol) {
        throw ShapeError("cholesky: matrix is not symmetric at (" + std::to_string(i) + ", " +
                         std::to_string(j) + ")");
      }
      sym(i, j) = 0.5 * (a(i, j) + a(j, i));
    }
  }

  std::vector<double> schedule;
  if (jitter_schedule.empty()) {
    schedule = default_jitter_schedule(sym);
  } else {
    schedule.assign(jitter_schedule.begin(), jitter_schedule.end());
  }

  CholeskyFactor factor;
  for (double jitter : schedule) {
    if (try_factor(sym, jitter, factor.lower)) {
      factor.jitter_used = jitter;
      return factor;
    }
  }
  throw NotPositiveDefiniteError("cholesky: " + dims(a) +
                                 " matrix is not positive definite at any jitter level (max " +
                                 std::to_string(schedule.empty() ? 0.0 : schedule.back()) + ")");
}

void forward_substitute(const Matrix& lower, std::span<double> b) {
  const std::size_t n = lower.rows();
  for (std::size_t i = 0; i < n; ++i) {
    auto row = lower.row(i);
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= row[k] * b[k];
    b[i] = s / row[i];
  }
}

void back_substitute_transposed(const Matrix& lower, std::span<double> b) {
  const std::size_t n = lower.rows();
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * b[k];
    b[ii] = s / lower(ii, ii);
  }
}

std::vector<double> cholesky_solve(const CholeskyFactor& factor, std::span<const double> b) {
  if (b.size() != factor.dim()) {
    throw ShapeError("cholesky_solve: factor of dimension " + std::to_string(factor.dim()) +
                     " against right-hand side of length " + std::to_string(b.size()));
  }
  std::vector<double> x(b.begin(), b.end());
  forward_substitute(factor.lower, x);
  back_substitute_transposed(factor.lower, x);
  return x;
}

Matrix cholesky_solve(const CholeskyFactor& factor, const Matrix& b) {
  if (b.rows() != factor.dim()) {
    throw ShapeError("cholesky_solve: factor of dimension " + std::to_string(factor.dim()) +
                     " against " + dims(b) + " right-hand side");
  }
  Matrix out(b.rows(), b.cols());
  std::vector<double> col(b.rows());
  for (std::size_t j = 0; j < b.cols(); ++j) {
    for (std::size_t i = 0; i < b.rows(); ++i) col[i] = b(i, j);
    forward_substitute(factor.lower, col);
    back_substitute_transposed(factor.lower, col);
    for (std::size_t i = 0; i < b.rows(); ++i) out(i, j) = col[i];
  }
  return out;
}

}  // namespace gapa
