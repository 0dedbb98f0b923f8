#include "cal/modulation.hpp"

#include "cal/errors.hpp"

#include <cmath>

namespace cal {

namespace {

Vector stable_softmax(const Vector& logits) {
  Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

}  // namespace

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::strong: return "strong";
    case Strategy::null: return "null";
    case Strategy::weak: return "weak";
    case Strategy::ogm: return "ogm";
  }
  return "?";
}

Vector ModulationVector::scale_factors() const {
  if (strategy == Strategy::ogm) return (1.0 - eta * coefficients.array()).max(0.0).matrix();
  return (1.0 + eta * coefficients.array()).matrix();
}

ModulationVector modulation_vector(const Vector& weights, double temperature, Strategy strategy, double eta) {
  if (!(temperature > 0.0)) throw ArgumentError("modulation_vector: temperature must be positive");
  if (!(eta >= 0.0)) throw ArgumentError("modulation_vector: eta must be non-negative");
  if (weights.size() == 0) throw ArgumentError("modulation_vector: no modalities");
  ModulationVector mod;
  mod.strategy = strategy;
  mod.temperature = temperature;
  mod.eta = eta;
  switch (strategy) {
    case Strategy::strong:
    case Strategy::ogm: mod.coefficients = stable_softmax(weights / temperature); break;
    case Strategy::weak: mod.coefficients = stable_softmax(-weights / temperature); break;
    case Strategy::null:
      mod.coefficients = Vector::Constant(weights.size(), 1.0 / static_cast<double>(weights.size()));
      break;
  }
  return mod;
}

GradientBundle modulate_gradients(GradientBundle grads, const ModulationVector& mod, bool scale_heads) {
  if (static_cast<Index>(grads.modality.size()) != mod.coefficients.size())
    throw DimensionError("modulate_gradients: bundle has " + std::to_string(grads.modality.size()) +
                         " modalities, modulation vector " + std::to_string(mod.coefficients.size()));
  const Vector scale = mod.scale_factors();
  for (std::size_t m = 0; m < grads.modality.size(); ++m) {
    const double s = scale[static_cast<Index>(m)];
    for (auto& g : grads.modality[m].encoder) g *= s;
    if (scale_heads)
      for (auto& g : grads.modality[m].head) g *= s;
  }
  return grads;
}

}  // namespace cal
