#pragma once

#include "cal/model.hpp"
#include "cal/tensor.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cal {

inline constexpr double kMinWeight = 1e-4;
inline constexpr double kMinRelImprove = 0.01;
inline constexpr double kMaxRelImprove = 10.0;

enum class ContributionMode { dxi, d_plus_i, d_only, i_only, kl };
enum class AblationMode { mask, retrain };

std::string to_string(ContributionMode mode);
std::string to_string(AblationMode mode);

/// Mean predicted probability of the true label.
double unimodal_confidence(std::span<const double> probs_true_label);

/// Mean log-likelihood gain of the full model over the ablated one. Both
/// inputs are floored at ln(1e-12) before differencing.
double marginal_contribution(std::span<const double> full_logprobs, std::span<const double> ablated_logprobs);

/// Per-epoch unimodal performance, keeping the most recent `capacity` epochs.
class PerformanceHistory {
 public:
  PerformanceHistory(int modalities, int capacity);

  void record(int epoch, std::span<const double> per_modality);
  std::optional<double> at(int modality, int epoch) const;

  int modalities() const { return modalities_; }
  int capacity() const { return capacity_; }
  std::optional<int> latest_epoch() const;

 private:
  struct Entry {
    int epoch;
    std::vector<double> values;
  };
  int modalities_;
  int capacity_;
  std::vector<Entry> ring_;
  std::size_t head_ = 0;
};

/// (P(t) - P(t-n)) / max(P(t-n), eps), clamped to [0.01, 10]; 1.0 while t < n
/// or when P(t-n) is no longer held.
double relative_improvement(const PerformanceHistory& hist, int modality, int epoch, int lag, double eps = 1e-8);

/// max(phi, 0) * r.
double confidence_score(double phi, double r);

/// max(d * i, 1e-4).
double modality_weight(double d, double i);

struct ModalityContribution {
  double info_nats = 0.0;
  double unimodal_conf = 0.0;
  double marginal = 0.0;
  double rel_improve = 1.0;
  double confidence = 0.0;
  double weight = kMinWeight;
};

struct ContributionReport {
  int epoch = 0;
  std::vector<ModalityContribution> modality;
  int degenerate_mi = 0;
  int undersampled_mi = 0;

  Vector weights() const;
};

struct ContributionConfig {
  ContributionMode mode = ContributionMode::dxi;
  AblationMode ablation = AblationMode::mask;
  int lag = 5;
  double eps = 1e-8;
  // retrain ablation: full-batch SGD steps on a copy of the fusion head
  int retrain_steps = 50;
  double retrain_lr = 0.05;
};

/// Symmetrised KL between two row-stochastic matrices, averaged over rows.
double mean_symmetric_kl(const Matrix& p, const Matrix& q);

/// Contribution of every modality on a validation batch. Appends this
/// epoch's unimodal confidences to `hist`. The model is only read.
/// `train` is required for AblationMode::retrain.
ContributionReport compute_report(const Model& model, const Batch& val, PerformanceHistory& hist, int epoch,
                                  const ContributionConfig& cfg, const Batch* train = nullptr);

}  // namespace cal
