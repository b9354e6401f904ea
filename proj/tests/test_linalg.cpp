#include "support.hpp"

#include "gapa/errors.hpp"
#include "gapa/linalg.hpp"

using namespace gapa;
using gapa::test::random_matrix;
using gapa::test::random_spd;

TEST_SUITE("linalg") {

TEST_CASE("matmul small cases") {
  Engine eng(1);
  const Matrix b = random_matrix(3, 4, eng);
  CHECK(matmul(Matrix::identity(3), b) == b);
  CHECK(matmul(Matrix::from_rows({{2}}), Matrix::from_rows({{3}})) == Matrix::from_rows({{6}}));
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 2)), ShapeError);
}

TEST_CASE("matmul is associative on random matrices") {
  Engine eng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_matrix(3, 5, eng), b = random_matrix(5, 2, eng), c = random_matrix(2, 4, eng);
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    CHECK(max_abs_diff(left, right) <= 1e-12 * (1.0 + norm_inf(left)));
  }
}

TEST_CASE("matrix rejects non-finite values and bad lengths") {
  CHECK_THROWS_AS(Matrix(2, 2, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS(Matrix(1, 2, std::vector<double>{1, std::nan("")}));
}

TEST_CASE("congruence is symmetric and matches A B A^T") {
  Engine eng(3);
  const Matrix a = random_matrix(4, 6, eng);
  const Matrix b = random_spd(6, eng);
  const Matrix c = congruence(a, b);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(c(i, j) == c(j, i));
  CHECK(max_abs_diff(c, matmul(matmul(a, b), transpose(a))) <= 1e-10 * norm_inf(c));
}

TEST_CASE("cholesky examples") {
  const auto id = cholesky(Matrix::identity(2));
  CHECK(id.lower == Matrix::identity(2));
  CHECK(id.jitter_used == 0.0);

  const auto f = cholesky(Matrix::from_rows({{4, 2}, {2, 3}}));
  CHECK(f.lower(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(f.lower(0, 1) == 0.0);
  CHECK(f.lower(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(f.lower(1, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  const Matrix back = matmul(f.lower, transpose(f.lower));
  CHECK(max_abs_diff(back, Matrix::from_rows({{4, 2}, {2, 3}})) <= 1e-14);

  CHECK_THROWS_AS(cholesky(Matrix::from_rows({{1, 2}, {2, 1}})), NotPositiveDefiniteError);
}

TEST_CASE("cholesky rejects asymmetric and non-square input") {
  CHECK_THROWS_AS(cholesky(Matrix::from_rows({{1, 0.5}, {0, 1}})), ShapeError);
  CHECK_THROWS_AS(cholesky(Matrix(2, 3)), ShapeError);
}

TEST_CASE("cholesky jitter rescues a singular PSD matrix") {
  const auto f = cholesky(Matrix::from_rows({{1, 1}, {1, 1}}));
  CHECK(f.jitter_used > 0.0);
  CHECK(f.jitter_used <= 1e-6);
}

TEST_CASE("cholesky reconstructs random SPD matrices") {
  Engine eng(11);
  for (std::size_t n : {1, 2, 5, 12, 30}) {
    const Matrix a = random_spd(n, eng);
    const auto f = cholesky(a);
    CHECK(f.jitter_used == 0.0);
    CHECK(max_abs_diff(matmul(f.lower, transpose(f.lower)), a) <= 1e-12 * norm_inf(a));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) CHECK(f.lower(i, j) == 0.0);
  }
}

TEST_CASE("cholesky_solve examples") {
  const auto id = cholesky(Matrix::identity(2));
  CHECK(cholesky_solve(id, Matrix::from_rows({{5}, {7}})) == Matrix::from_rows({{5}, {7}}));
  const auto d = cholesky(Matrix::from_rows({{4, 0}, {0, 9}}));
  const Matrix x = cholesky_solve(d, Matrix::from_rows({{8}, {18}}));
  CHECK(x(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(x(1, 0) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK_THROWS_AS(cholesky_solve(id, Matrix(3, 1)), ShapeError);
}

TEST_CASE("cholesky_solve re-multiplies to the right-hand side") {
  Engine eng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(trial);
    const Matrix a = random_spd(n, eng);
    const Matrix b = random_matrix(n, 3, eng);
    const Matrix x = cholesky_solve(cholesky(a), b);
    CHECK(max_abs_diff(matmul(a, x), b) <= 1e-9 * norm_inf(b));

    std::vector<double> bv(b.values().begin(), b.values().begin() + static_cast<std::ptrdiff_t>(n));
    const auto xv = cholesky_solve(cholesky(a), bv);
    const auto ax = matvec(a, xv);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(ax[i] - bv[i]) <= 1e-9 * (1.0 + std::abs(bv[i])));
  }
}

}  // TEST_SUITE
