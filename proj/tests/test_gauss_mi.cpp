#include "cal/errors.hpp"
#include "cal/gauss_mi.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <cmath>
#include <vector>

using namespace cal;
using cal::testing::random_matrix;

namespace {

// Laplace expansion along the first row.
double cofactor_det(const Matrix& a) {
  const Index n = a.rows();
  if (n == 1) return a(0, 0);
  double det = 0.0;
  for (Index j = 0; j < n; ++j) {
    Matrix minor(n - 1, n - 1);
    for (Index r = 1; r < n; ++r)
      for (Index c = 0, k = 0; c < n; ++c)
        if (c != j) minor(r - 1, k++) = a(r, c);
    det += ((j % 2 == 0) ? 1.0 : -1.0) * a(0, j) * cofactor_det(minor);
  }
  return det;
}

/// Columns (x, y) with corr(x, y) = rho.
std::pair<Matrix, Matrix> correlated_pair(double rho, Index n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(n, 1), y(n, 1);
  for (Index i = 0; i < n; ++i) {
    const double a = rng.normal(), b = rng.normal();
    x(i, 0) = a;
    y(i, 0) = rho * a + std::sqrt(1.0 - rho * rho) * b;
  }
  return {x, y};
}

double closed_form(double rho) { return -0.5 * std::log(1.0 - rho * rho); }

}  // namespace

TEST_CASE("sample covariance") {
  SUBCASE("identical rows give the jitter alone") {
    Matrix x(2, 3);
    x << 1, 2, 3, 1, 2, 3;
    const auto cov = sample_covariance(x);
    CHECK(cov.jitter == doctest::Approx(1e-6));
    CHECK((cov.sigma - 1e-6 * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-18);
  }
  SUBCASE("square corners") {
    Matrix x(4, 2);
    x << 0, 0, 2, 0, 0, 2, 2, 2;
    const auto cov = sample_covariance(x);
    const double jitter = 1e-6 * (8.0 / 3.0) / 2.0;
    CHECK(cov.jitter == doctest::Approx(jitter));
    CHECK(cov.sigma(0, 0) == doctest::Approx(4.0 / 3.0 + jitter).epsilon(1e-12));
    CHECK(cov.sigma(1, 1) == doctest::Approx(4.0 / 3.0 + jitter).epsilon(1e-12));
    CHECK(std::abs(cov.sigma(0, 1)) < 1e-15);
    CHECK(cov.samples == 4);
  }
  SUBCASE("Monte-Carlo standard normal") {
    Rng rng(21);
    const auto cov = sample_covariance(random_matrix(10000, 3, rng));
    CHECK((cov.sigma - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() < 0.05);
    CHECK((cov.sigma - cov.sigma.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("fewer than two samples") {
    CHECK_THROWS_AS(sample_covariance(Matrix::Zero(1, 2)), InsufficientSamplesError);
  }
}

TEST_CASE("log determinant") {
  CovarianceEstimate eye{Matrix::Identity(4, 4), 0.0, 10};
  CHECK(log_det_psd(eye) == doctest::Approx(0.0));

  Matrix d = Matrix::Zero(2, 2);
  d.diagonal() << 2, 3;
  CHECK(log_det_psd({d, 0.0, 10}) == doctest::Approx(std::log(6.0)).epsilon(1e-12));

  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const Index dim = 1 + static_cast<Index>(rng.below(4));
    const Matrix a = random_matrix(dim + 3, dim, rng);
    const Matrix spd = a.transpose() * a + 0.1 * Matrix::Identity(dim, dim);
    CHECK(std::abs(log_det_psd({spd, 0.0, dim + 3}) - std::log(cofactor_det(spd))) < 1e-8);
  }

  SUBCASE("escalation rescues a singular matrix, an indefinite one fails") {
    CovarianceEstimate singular{Matrix::Zero(2, 2), 1e-6, 2};
    CHECK(std::isfinite(log_det_psd(singular)));
    Matrix neg = -Matrix::Identity(2, 2);
    CHECK_THROWS_AS(log_det_psd({neg, 1e-6, 2}), DegenerateCovarianceError);
  }
}

TEST_CASE("Gaussian mutual information") {
  SUBCASE("closed-form correlated pairs") {
    for (double rho : {0.2, 0.5, 0.8}) {
      const auto [x, y] = correlated_pair(rho, 10000, 1000 + static_cast<std::uint64_t>(rho * 10));
      CHECK(std::abs(gaussian_mi(x, y) - closed_form(rho)) < 0.02);
    }
    CHECK(closed_form(0.5) == doctest::Approx(0.1438).epsilon(1e-3));
    CHECK(closed_form(0.8) == doctest::Approx(0.5108).epsilon(1e-3));
  }
  SUBCASE("independent blocks") {
    Rng rng(5);
    const double mi = gaussian_mi(random_matrix(10000, 2, rng), random_matrix(10000, 2, rng));
    CHECK(mi >= 0.0);
    CHECK(mi <= 0.01);
  }
  SUBCASE("strictly increasing in |rho|") {
    double prev = -1.0;
    for (double rho : {0.2, 0.5, 0.8}) {
      const auto [x, y] = correlated_pair(rho, 10000, 77);
      const double mi = gaussian_mi(x, y);
      CHECK(mi > prev);
      prev = mi;
    }
  }
  SUBCASE("symmetry") {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix x = random_matrix(200, 3, rng);
      const Matrix y = x.leftCols(2) * 0.5 + random_matrix(200, 2, rng);
      CHECK(std::abs(gaussian_mi(x, y) - gaussian_mi(y, x)) < 1e-9);
    }
  }
  SUBCASE("invariance under affine reparameterisation") {
    Rng rng(13);
    int tested = 0;
    while (tested < 10) {
      const Matrix x = random_matrix(500, 3, rng);
      const Matrix y = x.leftCols(2) * 0.7 + random_matrix(500, 2, rng);
      const Matrix a = random_matrix(3, 3, rng);
      Eigen::JacobiSVD<Matrix> svd(a);
      const double cond = svd.singularValues()(0) / svd.singularValues()(2);
      if (cond >= 100.0) continue;
      ++tested;
      const RowVector shift = random_matrix(1, 3, rng, 5.0);
      const Matrix xt = (x * a).rowwise() + shift;
      const double base = gaussian_mi_detailed(x, y).raw;
      CHECK(std::abs(gaussian_mi_detailed(xt, y).raw - base) < 1e-6);
      CHECK(std::abs(gaussian_mi_detailed(x, y * 3.0).raw - base) < 1e-6);
    }
  }
  SUBCASE("clamped at zero") {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const auto est = gaussian_mi_detailed(random_matrix(30, 1, rng), random_matrix(30, 1, rng));
      CHECK(est.nats >= 0.0);
      CHECK(est.nats == std::max(est.raw, 0.0));
    }
  }
  SUBCASE("copy of the argument is degenerate") {
    Rng rng(4);
    const Matrix x = random_matrix(100, 3, rng);
    CHECK_THROWS_AS(gaussian_mi(x, x), DegenerateCovarianceError);
  }
  SUBCASE("sample-count mismatch") {
    CHECK_THROWS_AS(gaussian_mi(Matrix::Zero(5, 1), Matrix::Zero(6, 1)), ArgumentError);
  }
  SUBCASE("undersampled input still returns an estimate") {
    Rng rng(6);
    const auto est = gaussian_mi_detailed(random_matrix(5, 2, rng), random_matrix(5, 2, rng));
    CHECK(est.undersampled);
    CHECK(std::isfinite(est.nats));
  }
}
