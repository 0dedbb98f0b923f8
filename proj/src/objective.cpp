#include "cal/objective.hpp"

#include "cal/errors.hpp"
#include "cal/losses.hpp"

namespace cal {

double combine_losses(double ce_fusion, const std::vector<double>& ce_modality,
                      const std::vector<double>& loss_weights, double aib, double lambda) {
  if (ce_modality.size() != loss_weights.size())
    throw DimensionError("combine_losses: one loss weight per modality required");
  double total = ce_fusion;
  for (std::size_t m = 0; m < ce_modality.size(); ++m) total += loss_weights[m] * ce_modality[m];
  return total + lambda * aib;
}

namespace {

double zx_scale(const GaussianPosterior<double>& post, const LossSetup& setup) {
  return setup.mi_zx_per_dim && post.mu.cols() > 0 ? 1.0 / static_cast<double>(post.mu.cols()) : 1.0;
}

}  // namespace

LossBreakdown total_loss(const ForwardPass& pass, const Labels& labels, const LossSetup& setup,
                         OutputGrads* grads) {
  const std::size_t M = pass.unimodal_logits.size();
  if (setup.loss_weights.size() != M) throw DimensionError("total_loss: one loss weight per modality required");
  if (pass.fusion_logits.rows() != static_cast<Index>(labels.size()))
    throw DimensionError("total_loss: batch size differs from label count");

  LossBreakdown out;
  const auto ce_f = softmax_cross_entropy(pass.fusion_logits, labels);
  out.ce_fusion = ce_f.loss;

  std::vector<CrossEntropy<double>> ce_m;
  Vector mi_zx(static_cast<Index>(M)), mi_zy(static_cast<Index>(M));
  for (std::size_t m = 0; m < M; ++m) {
    ce_m.push_back(softmax_cross_entropy(pass.unimodal_logits[m], labels));
    out.ce_modality.push_back(ce_m.back().loss);
    out.ce_unimodal += setup.loss_weights[m] * ce_m.back().loss;
    mi_zx[static_cast<Index>(m)] = mi_zx_surrogate(pass.posteriors[m]) * zx_scale(pass.posteriors[m], setup);
    mi_zy[static_cast<Index>(m)] = mi_zy_from_ce(ce_m.back().loss, setup.label_entropy);
  }

  const bool use_aib = setup.variant != AibVariant::off;
  if (use_aib) {
    if (setup.beta.size() != static_cast<Index>(M) || setup.weights.size() != static_cast<Index>(M))
      throw DimensionError("total_loss: beta / weights need one entry per modality");
    out.aib_terms = aib_loss(setup.beta, setup.weights, mi_zx, mi_zy, setup.variant, setup.beta_on_compression);
    out.aib = out.aib_terms.loss;
  } else {
    out.aib_terms.variant = AibVariant::off;
    out.aib_terms.mi_zx = mi_zx;
    out.aib_terms.mi_zy = mi_zy;
  }
  out.total = combine_losses(out.ce_fusion, out.ce_modality, setup.loss_weights, out.aib, setup.lambda);

  if (grads) {
    grads->fusion_logits = ce_f.grad_logits;
    grads->unimodal_logits.assign(M, Matrix());
    grads->mu.assign(M, Matrix());
    grads->logvar.assign(M, Matrix());
    for (std::size_t m = 0; m < M; ++m) {
      const auto mi = static_cast<Index>(m);
      double coef = setup.loss_weights[m];
      if (use_aib) {
        // mi_zy = H - CE while positive, so d mi_zy / d CE = -1 there.
        if (setup.label_entropy - ce_m[m].loss > 0.0) coef -= setup.lambda * out.aib_terms.d_mi_zy[mi];
        const double zx = setup.lambda * out.aib_terms.d_mi_zx[mi] * zx_scale(pass.posteriors[m], setup);
        const auto kl = kl_std_normal_grad(pass.posteriors[m]);
        grads->mu[m] = zx * kl.mu;
        grads->logvar[m] = zx * kl.logvar;
      }
      grads->unimodal_logits[m] = coef * ce_m[m].grad_logits;
    }
  }
  return out;
}

}  // namespace cal
