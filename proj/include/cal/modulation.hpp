#pragma once

#include "cal/model.hpp"
#include "cal/tensor.hpp"

#include <string>

namespace cal {

enum class Strategy { strong, null, weak, ogm };

std::string to_string(Strategy s);

/// Softmax-normalised per-modality coefficients and the rule that produced them.
struct ModulationVector {
  Vector coefficients;
  Strategy strategy = Strategy::strong;
  double temperature = 1.0;
  double eta = 1.0;

  /// Multiplier applied to modality m's gradient block:
  /// 1 + eta * a_m for additive strategies, max(1 - eta * a_m, 0) for ogm.
  Vector scale_factors() const;
};

/// strong: softmax(W / T); weak: softmax(-W / T); null: uniform; ogm: as strong.
ModulationVector modulation_vector(const Vector& weights, double temperature, Strategy strategy, double eta = 1.0);

/// Scales each modality block by its factor. Shared-fusion gradients pass
/// through untouched; unimodal heads are scaled unless `scale_heads` is false.
GradientBundle modulate_gradients(GradientBundle grads, const ModulationVector& mod, bool scale_heads = true);

}  // namespace cal
