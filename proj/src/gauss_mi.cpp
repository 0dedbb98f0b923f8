#include "cal/gauss_mi.hpp"

#include "cal/errors.hpp"

#include <cmath>
#include <string>

namespace cal {

CovarianceEstimate sample_covariance(const Matrix& x) {
  const Index n = x.rows();
  const Index d = x.cols();
  if (n < 2)
    throw InsufficientSamplesError("sample_covariance: need at least 2 samples, got " +
                                   std::to_string(n));
  const RowVector mean = x.colwise().mean();
  const Matrix centred = x.rowwise() - mean;
  CovarianceEstimate cov;
  cov.samples = n;
  cov.sigma = (centred.transpose() * centred) / static_cast<double>(n - 1);
  // Symmetrise away the round-off of the product.
  cov.sigma = (0.5 * (cov.sigma + cov.sigma.transpose())).eval();
  const double trace = cov.sigma.trace();
  cov.jitter = trace > 0.0 ? 1e-6 * trace / static_cast<double>(d) : 1e-6;
  cov.sigma.diagonal().array() += cov.jitter;
  return cov;
}

double log_det_psd(const CovarianceEstimate& cov) {
  Matrix sigma = cov.sigma;
  double extra = cov.jitter;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() == Eigen::Success) {
      const auto diag = llt.matrixLLT().diagonal();
      if ((diag.array() > 0.0).all() && diag.allFinite()) return 2.0 * diag.array().log().sum();
    }
    if (attempt == 3) break;
    // Grow the total jitter ten-fold: add nine times the current amount.
    const double add = 9.0 * (extra > 0.0 ? extra : 1e-6);
    sigma.diagonal().array() += add;
    extra += add;
  }
  throw DegenerateCovarianceError("log_det_psd: covariance " + shape_str(cov.sigma) +
                                  " not positive definite after jitter escalation");
}

Index jitter_level_rank_deficit(const CovarianceEstimate& cov) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov.sigma, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) return cov.sigma.rows();
  const double threshold = 10.0 * cov.jitter;
  return (eig.eigenvalues().array() <= threshold).count();
}

namespace {

/// Centres `x` and maps it through the inverse of its own (jittered)
/// Cholesky factor. The result's covariance is close to I and is the same up
/// to a rotation for any invertible affine reparameterisation of `x`, so the
/// jitter applied afterwards no longer depends on how `x` was parameterised.
Matrix whiten(const Matrix& x) {
  CovarianceEstimate cov = sample_covariance(x);
  const Matrix centred = x.rowwise() - x.colwise().mean();
  for (int attempt = 0; attempt <= 3; ++attempt) {
    Eigen::LLT<Matrix> llt(cov.sigma);
    if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all())
      return llt.matrixL().solve(centred.transpose()).transpose();
    cov.sigma.diagonal().array() += 9.0 * cov.jitter;
    cov.jitter *= 10.0;
  }
  throw DegenerateCovarianceError("gaussian_mi: covariance " + shape_str(cov.sigma) +
                                  " not positive definite after jitter escalation");
}

}  // namespace

MutualInformation gaussian_mi_detailed(const Matrix& x_raw, const Matrix& y_raw) {
  if (x_raw.rows() != y_raw.rows())
    throw ArgumentError("gaussian_mi: sample counts differ (" + std::to_string(x_raw.rows()) + " vs " +
                        std::to_string(y_raw.rows()) + ")");
  if (x_raw.rows() < 2)
    throw InsufficientSamplesError("gaussian_mi: need at least 2 samples, got " + std::to_string(x_raw.rows()));
  const Matrix x = whiten(x_raw);
  const Matrix y = whiten(y_raw);
  Matrix joint(x.rows(), x.cols() + y.cols());
  joint << x, y;

  const CovarianceEstimate cx = sample_covariance(x);
  const CovarianceEstimate cy = sample_covariance(y);
  const CovarianceEstimate cz = sample_covariance(joint);

  const Index deficit_joint = jitter_level_rank_deficit(cz);
  if (deficit_joint > jitter_level_rank_deficit(cx) + jitter_level_rank_deficit(cy))
    throw DegenerateCovarianceError(
        "gaussian_mi: joint covariance is rank deficient beyond its marginals (X and Y are "
        "linearly dependent)");

  MutualInformation mi;
  mi.undersampled = x.rows() < x.cols() + y.cols() + 2;
  mi.raw = 0.5 * (log_det_psd(cx) + log_det_psd(cy) - log_det_psd(cz));
  mi.nats = mi.raw > 0.0 ? mi.raw : 0.0;
  return mi;
}

}  // namespace cal
