#pragma once

#include "cal/tensor.hpp"

namespace cal {

/// Sample covariance with a diagonal shrinkage jitter already applied.
struct CovarianceEstimate {
  Matrix sigma;
  double jitter = 0.0;
  Index samples = 0;
};

/// Mean-centred covariance (divisor N-1) plus jitter 1e-6 * trace / D on the
/// diagonal (1e-6 when the trace is zero).
CovarianceEstimate sample_covariance(const Matrix& x);

/// log det via Cholesky. When factorisation fails the jitter is raised ten-fold,
/// at most three times, before DegenerateCovarianceError is thrown.
double log_det_psd(const CovarianceEstimate& cov);

/// Number of eigenvalues at or below ten times the applied jitter.
Index jitter_level_rank_deficit(const CovarianceEstimate& cov);

struct MutualInformation {
  double nats = 0.0;  // clamped at zero
  double raw = 0.0;   // before clamping
  bool undersampled = false;  // N < Dx + Dy + 2
};

/// I(X;Y) = 1/2 [log det S_X + log det S_Y - log det S_XY] for jointly Gaussian
/// rows of X and Y. Each argument is whitened by its own covariance first; MI
/// is unchanged by that map, and the diagonal jitter then acts the same way
/// for every affine reparameterisation of X or Y. Throws
/// DegenerateCovarianceError when the joint covariance is rank deficient
/// beyond its marginals (e.g. Y a copy of X).
MutualInformation gaussian_mi_detailed(const Matrix& x, const Matrix& y);

inline double gaussian_mi(const Matrix& x, const Matrix& y) { return gaussian_mi_detailed(x, y).nats; }

}  // namespace cal
