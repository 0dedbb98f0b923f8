#include "cal/aib.hpp"

#include "cal/errors.hpp"
#include "cal/losses.hpp"

namespace cal {

std::string to_string(AibVariant v) {
  switch (v) {
    case AibVariant::beta: return "beta";
    case AibVariant::inv_beta: return "inv-beta";
    case AibVariant::mi: return "mi";
    case AibVariant::mx: return "mx";
    case AibVariant::mx_mi: return "mx-mi";
    case AibVariant::off: return "off";
  }
  return "?";
}

Vector beta_factors(const Vector& weights) {
  if (weights.size() == 0) throw ArgumentError("beta_factors: no modalities");
  if ((weights.array() <= 0.0).any()) throw ArgumentError("beta_factors: weights must be positive");
  const double total = weights.sum();
  return ((total - weights.array()) / total).matrix();
}

double mi_zy_surrogate(const Matrix& logits, const Labels& labels, double label_entropy) {
  return mi_zy_from_ce(softmax_cross_entropy(logits, labels).loss, label_entropy);
}

void resolve_variant(const Vector& beta, const Vector& weights, AibVariant variant, Vector& effective,
                     std::vector<bool>& active) {
  const Index M = beta.size();
  if (weights.size() != M) throw DimensionError("aib: beta and weight counts differ");
  effective = Vector::Zero(M);
  active.assign(static_cast<std::size_t>(M), false);

  // Lowest weight: first index on ties; highest: last index on ties, so that
  // mx-mi covers two modalities even when all weights are equal.
  Index lo = 0, hi = 0;
  for (Index m = 0; m < M; ++m) {
    if (weights[m] < weights[lo]) lo = m;
    if (weights[m] >= weights[hi]) hi = m;
  }

  switch (variant) {
    case AibVariant::off: return;
    case AibVariant::beta:
      effective = beta;
      active.assign(static_cast<std::size_t>(M), true);
      return;
    case AibVariant::inv_beta: {
      const Vector inv = beta.array().inverse().matrix();
      effective = inv / inv.sum() * static_cast<double>(M - 1);
      active.assign(static_cast<std::size_t>(M), true);
      return;
    }
    case AibVariant::mi:
      effective[lo] = 0.5;
      active[static_cast<std::size_t>(lo)] = true;
      return;
    case AibVariant::mx:
      effective[hi] = 0.5;
      active[static_cast<std::size_t>(hi)] = true;
      return;
    case AibVariant::mx_mi:
      effective[lo] = effective[hi] = 0.5;
      active[static_cast<std::size_t>(lo)] = active[static_cast<std::size_t>(hi)] = true;
      return;
  }
}

AibTerms aib_loss(const Vector& beta, const Vector& weights, const Vector& mi_zx, const Vector& mi_zy,
                  AibVariant variant, bool beta_on_compression) {
  const Index M = beta.size();
  if (mi_zx.size() != M || mi_zy.size() != M) throw DimensionError("aib_loss: surrogate counts differ from beta");
  AibTerms t;
  t.variant = variant;
  t.beta = beta;
  t.mi_zx = mi_zx;
  t.mi_zy = mi_zy;
  t.d_mi_zx = Vector::Zero(M);
  t.d_mi_zy = Vector::Zero(M);
  resolve_variant(beta, weights, variant, t.effective_beta, t.active);

  for (Index m = 0; m < M; ++m) {
    if (!t.active[static_cast<std::size_t>(m)]) continue;
    const double b = t.effective_beta[m];
    const double u = beta_on_compression ? mi_zy[m] - b * mi_zx[m] : b * mi_zy[m] - mi_zx[m];
    t.loss += neg_log_sigmoid(u);
    // d/du [-log sigmoid(u)] = -sigmoid(-u)
    const double du = -sigmoid(-u);
    if (beta_on_compression) {
      t.d_mi_zy[m] = du;
      t.d_mi_zx[m] = -b * du;
    } else {
      t.d_mi_zy[m] = b * du;
      t.d_mi_zx[m] = -du;
    }
  }
  return t;
}

}  // namespace cal
