#pragma once

#include "cal/gaussian.hpp"
#include "cal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace cal {

enum class AibVariant { beta, inv_beta, mi, mx, mx_mi, off };

std::string to_string(AibVariant v);

/// beta_m = sum_{i != m} w_i / sum_j w_j. Sums to M - 1.
Vector beta_factors(const Vector& weights);

/// Upper bound on I(Z; X): KL of the posterior to N(0, I).
inline double mi_zx_surrogate(const GaussianPosterior<double>& post) { return kl_std_normal(post); }

/// Lower bound on I(Z; Y): max(H(Y) - CE, 0).
inline double mi_zy_from_ce(double cross_entropy, double label_entropy) {
  return std::max(label_entropy - cross_entropy, 0.0);
}

double mi_zy_surrogate(const Matrix& logits, const Labels& labels, double label_entropy);

/// Per-modality bottleneck state and the combined loss with its partials.
struct AibTerms {
  AibVariant variant = AibVariant::beta;
  Vector beta;            // contribution-derived factors
  Vector effective_beta;  // after the variant rule
  std::vector<bool> active;
  Vector mi_zx;
  Vector mi_zy;
  double loss = 0.0;
  Vector d_mi_zx;  // d loss / d mi_zx_m
  Vector d_mi_zy;  // d loss / d mi_zy_m
};

/// Coefficients the variant actually uses, given contribution weights:
/// beta as is; inv_beta: normalised reciprocals rescaled to sum M - 1;
/// mi / mx / mx_mi: only the lowest / highest / both extreme-weight
/// modalities at 0.5.
void resolve_variant(const Vector& beta, const Vector& weights, AibVariant variant, Vector& effective,
                     std::vector<bool>& active);

/// sum over active m of -log sigmoid(beta_m * mi_zy_m - mi_zx_m), or with
/// `beta_on_compression` -log sigmoid(mi_zy_m - beta_m * mi_zx_m).
AibTerms aib_loss(const Vector& beta, const Vector& weights, const Vector& mi_zx, const Vector& mi_zy,
                  AibVariant variant, bool beta_on_compression = false);

/// -log sigmoid(u), stable for any u.
inline double neg_log_sigmoid(double u) { return std::max(-u, 0.0) + std::log1p(std::exp(-std::abs(u))); }

/// Logistic function, stable for any u.
inline double sigmoid(double u) {
  return u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

}  // namespace cal
