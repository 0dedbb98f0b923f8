#pragma once

#include "cal/aib.hpp"
#include "cal/model.hpp"

#include <vector>

namespace cal {

/// Constants of the objective for one epoch.
struct LossSetup {
  Vector beta;     // from the epoch's contribution weights; no gradient
  Vector weights;  // contribution weights, for the extreme-modality variants
  AibVariant variant = AibVariant::beta;
  double lambda = 10.0;
  std::vector<double> loss_weights;  // lambda_m
  double label_entropy = 0.0;
  bool beta_on_compression = false;
  // Divide the KL surrogate by the latent width (nats per latent unit).
  bool mi_zx_per_dim = true;
};

struct LossBreakdown {
  double total = 0.0;
  double ce_fusion = 0.0;
  double ce_unimodal = 0.0;  // sum_m lambda_m CE_m
  double aib = 0.0;          // unscaled L_AIB
  std::vector<double> ce_modality;
  AibTerms aib_terms;
};

/// CE(fusion) + sum_m lambda_m CE(unimodal_m) + lambda L_AIB.
double combine_losses(double ce_fusion, const std::vector<double>& ce_modality,
                      const std::vector<double>& loss_weights, double aib, double lambda);

/// Evaluates the total objective on a training forward pass. When `grads`
/// is given it receives d total / d outputs, ready for Model::backward.
LossBreakdown total_loss(const ForwardPass& pass, const Labels& labels, const LossSetup& setup,
                         OutputGrads* grads = nullptr);

}  // namespace cal
