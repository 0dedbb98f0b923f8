#pragma once

#include "cal/gaussian.hpp"
#include "cal/layers.hpp"
#include "cal/optim.hpp"
#include "cal/rng.hpp"
#include "cal/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cal {

struct ModelConfig {
  std::vector<Index> input_dims;           // one entry per modality
  int classes = 4;
  std::vector<Index> encoder_hidden{64, 32};
  Index latent_dim = 16;
  Index fusion_hidden = 32;
  ActivationKind activation = ActivationKind::relu;

  int modalities() const { return static_cast<int>(input_dims.size()); }
};

/// Per-modality feature blocks sharing one sample ordering.
struct Batch {
  std::vector<Matrix> features;
  Labels labels;

  Index size() const { return static_cast<Index>(labels.size()); }
  int modalities() const { return static_cast<int>(features.size()); }
};

/// Encoder -> Gaussian posterior head -> unimodal classifier, for one modality.
struct ModalityBranch {
  std::vector<Linear<double>> encoder;
  std::vector<Activation<double>> activations;
  Linear<double> mu_head;
  Linear<double> logvar_head;
  Linear<double> classifier;

  Matrix encode(const Matrix& x) const;
  Matrix encode_train(const Matrix& x);
  void backward_encoder(const Matrix& grad_features);
};

/// Shared head over the concatenated latents: hidden layer + activation +
/// logits. The hidden activations serve as the fused representation.
struct FusionHead {
  Linear<double> hidden;
  Activation<double> activation{ActivationKind::relu};
  Linear<double> out;

  struct Output {
    Matrix hidden;
    Matrix logits;
  };

  Output apply(const Matrix& latents) const;
  Output forward(const Matrix& latents);
  Matrix backward(const Matrix& grad_logits);
};

/// Everything one training forward produces and backward consumes.
struct ForwardPass {
  std::vector<GaussianPosterior<double>> posteriors;
  std::vector<Matrix> noise;
  std::vector<Matrix> latents;
  std::vector<Matrix> unimodal_logits;
  Matrix fusion_hidden;
  Matrix fusion_logits;
};

/// Deterministic evaluation outputs (latents are posterior means).
struct Inference {
  std::vector<Matrix> latents;
  std::vector<Matrix> unimodal_logits;
  Matrix fusion_hidden;
  Matrix fusion_logits;
};

/// Loss gradients with respect to the model outputs.
struct OutputGrads {
  Matrix fusion_logits;
  std::vector<Matrix> unimodal_logits;
  std::vector<Matrix> mu;      // direct terms, e.g. from the KL surrogate
  std::vector<Matrix> logvar;
};

/// Flat copy of every parameter gradient, grouped the way modulation sees it.
struct GradientBundle {
  struct ModalityBlock {
    std::vector<Matrix> encoder;  // encoder layers and posterior heads
    std::vector<Matrix> head;     // unimodal classifier
  };
  std::vector<ModalityBlock> modality;
  std::vector<Matrix> shared;
};

class Model {
 public:
  Model() = default;
  Model(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  int modalities() const { return config_.modalities(); }

  /// Posterior-mean forward with no caching. Modalities flagged in `masked`
  /// have their input block replaced by zeros.
  Inference infer(const std::vector<Matrix>& features, const std::vector<bool>& masked = {}) const;

  ForwardPass forward_train(const std::vector<Matrix>& features, Rng& rng);
  void backward(const ForwardPass& pass, const OutputGrads& grads);

  void zero_grad();
  GradientBundle gradients() const;
  void set_gradients(const GradientBundle& bundle);
  void sgd_step(double lr, double momentum, double weight_decay);

  std::vector<Linear<double>*> layers();
  std::vector<const Linear<double>*> layers() const;
  Index parameter_count() const;

  /// FNV-1a over every parameter byte; used to prove read-only phases.
  std::uint64_t parameter_checksum() const;

  ModalityBranch& branch(int m) { return branches_.at(static_cast<std::size_t>(m)); }
  const ModalityBranch& branch(int m) const { return branches_.at(static_cast<std::size_t>(m)); }
  FusionHead& fusion() { return fusion_; }
  const FusionHead& fusion() const { return fusion_; }

  void save(const std::filesystem::path& path) const;
  static Model load(const std::filesystem::path& path);

 private:
  ModelConfig config_;
  std::vector<ModalityBranch> branches_;
  FusionHead fusion_;
};

/// Column-wise concatenation of per-modality latents.
Matrix concat_latents(const std::vector<Matrix>& latents);

}  // namespace cal
