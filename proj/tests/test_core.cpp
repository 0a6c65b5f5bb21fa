#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "mirage/matrix.hpp"
#include "mirage/rng.hpp"
#include "mirage/stats.hpp"

using namespace mirage;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * (2.0 * rng.uniform() - 1.0);
  return m;
}

// Independent oracle: naive triple loop.
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

// High-precision series oracle: erf(x) = 2/sqrt(pi) * sum (-1)^n x^(2n+1) / (n! (2n+1)).
// Accurate to ~1e-10 for |x| <= 4.5.
double erf_series(double x) {
  const double two_over_sqrt_pi = 1.1283791670955125739;
  double term = x;
  double sum = x;
  for (int n = 1; n < 200; ++n) {
    term *= -x * x / n;
    const double contrib = term / (2 * n + 1);
    sum += contrib;
    if (std::fabs(contrib) < 1e-18 * std::fabs(sum)) break;
  }
  return two_over_sqrt_pi * sum;
}

double phi_oracle(double z) { return 0.5 * (1.0 + erf_series(z * 0.7071067811865475244)); }

}  // namespace

TEST_CASE("matmul identity") {
  Matrix eye = Matrix::from_rows({{1, 0}, {0, 1}});
  Rng rng(42);
  Matrix m = random_matrix(2, 5, rng);
  CHECK(matmul(eye, m) == m);
}

TEST_CASE("matmul hand arithmetic") {
  Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  Matrix b = Matrix::from_rows({{1}, {1}});
  Matrix c = matmul(a, b);
  CHECK(c(0, 0) == doctest::Approx(3.0));
  CHECK(c(1, 0) == doctest::Approx(7.0));
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(7);
  Matrix a = random_matrix(5, 7, rng);
  Matrix b = random_matrix(7, 3, rng);
  Matrix got = matmul(a, b);
  Matrix want = matmul_oracle(a, b);
  for (std::size_t i = 0; i < got.data().size(); ++i)
    CHECK(got.data()[i] == doctest::Approx(want.data()[i]).epsilon(1e-12));
}

TEST_CASE("matmul dimension mismatch") {
  Matrix a(2, 3), b(4, 2);
  CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
}

TEST_CASE("matmul associativity on random matrices") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix a = random_matrix(4, 6, rng);
    Matrix b = random_matrix(6, 5, rng);
    Matrix c = random_matrix(5, 3, rng);
    Matrix left = matmul(matmul(a, b), c);
    Matrix right = matmul(a, matmul(b, c));
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < left.data().size(); ++i) {
      diff += (left.data()[i] - right.data()[i]) * (left.data()[i] - right.data()[i]);
      scale += left.data()[i] * left.data()[i];
    }
    CHECK(std::sqrt(diff) <= 1e-9 * std::max(1.0, std::sqrt(scale)));
  }
}

TEST_CASE("frobenius norm") {
  CHECK(frobenius_norm(Matrix(3, 4, 0.0)) == 0.0);
  CHECK(frobenius_norm(Matrix::from_rows({{3, 4}})) == doctest::Approx(5.0));

  Rng rng(3);
  Matrix m = random_matrix(4, 4, rng);
  double sum = 0.0;
  for (double v : m.data()) sum += v * v;
  CHECK(frobenius_norm(m) == doctest::Approx(std::sqrt(sum)).epsilon(1e-12));
}

TEST_CASE("column_center zeroes means") {
  Matrix constant(5, 3, 2.5);
  Matrix centered = column_center(constant);
  for (double v : centered.data()) CHECK(v == 0.0);

  Matrix two = column_center(Matrix::from_rows({{1}, {3}}));
  CHECK(two(0, 0) == doctest::Approx(-1.0));
  CHECK(two(1, 0) == doctest::Approx(1.0));

  Rng rng(5);
  Matrix m = random_matrix(6, 3, rng);
  for (double mean : column_means(column_center(m))) CHECK(std::fabs(mean) < 1e-12);
}

TEST_CASE("column_center is idempotent") {
  Rng rng(9);
  Matrix m = random_matrix(8, 4, rng, 10.0);
  Matrix once = column_center(m);
  Matrix twice = column_center(once);
  for (std::size_t i = 0; i < once.data().size(); ++i)
    CHECK(std::fabs(once.data()[i] - twice.data()[i]) <= 1e-12);
}

TEST_CASE("std_normal_cdf anchor values") {
  CHECK(std_normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::fabs(std_normal_cdf(8.0) - 1.0) <= 1e-7);
  CHECK(std::fabs(std_normal_cdf(12.0) - 1.0) <= 1e-7);
  CHECK(std::fabs(std_normal_cdf(1.0) - 0.8413447) <= 1e-7);
}

TEST_CASE("std_normal_cdf tracks the series oracle within 1e-7") {
  for (double z = -6.0; z <= 6.0; z += 0.0625)
    CHECK(std::fabs(std_normal_cdf(z) - phi_oracle(z)) <= 1e-7);
}

TEST_CASE("std_normal_cdf symmetry") {
  for (double z = 0.0; z <= 6.0; z += 0.03125)
    CHECK(std::fabs(std_normal_cdf(z) + std_normal_cdf(-z) - 1.0) <= 1e-12);
}

TEST_CASE("std_normal_cdf monotone and bounded") {
  double prev = -1.0;
  for (double z = -8.0; z <= 8.0; z += 0.01) {
    const double p = std_normal_cdf(z);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(p >= prev - 1e-15);
    prev = p;
  }
}

TEST_CASE("rng reproducibility over 10000 draws") {
  Rng a(123456789), b(123456789);
  for (int i = 0; i < 10000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng streams differ across seeds") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 100; ++i)
    if (a.next_u64() == b.next_u64()) ++same;
  CHECK(same == 0);
}

TEST_CASE("rng uniform range and normal moments") {
  Rng rng(77);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
  }
  CHECK(std::fabs(sum / n) < 0.02);
  CHECK(std::fabs(sum_sq / n - 1.0) < 0.03);
}

TEST_CASE("rng sampling without replacement") {
  Rng rng(31);
  auto picks = rng.sample_without_replacement(100, 30);
  CHECK(picks.size() == 30);
  std::set<std::size_t> unique(picks.begin(), picks.end());
  CHECK(unique.size() == 30);
  for (std::size_t p : picks) CHECK(p < 100);

  Rng rng2(31);
  CHECK(rng2.sample_without_replacement(100, 30) == picks);
}
