#include "cal/contribution.hpp"

#include "cal/errors.hpp"
#include "cal/gauss_mi.hpp"
#include "cal/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cal {

namespace {

const double kLogFloor = std::log(1e-12);

std::vector<double> true_label_logprobs(const Matrix& logits, const Labels& labels) {
  const Matrix logp = log_softmax_rows(logits);
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = logp(static_cast<Index>(i), labels[i]);
  return out;
}

std::vector<double> true_label_probs(const Matrix& logits, const Labels& labels) {
  auto lp = true_label_logprobs(logits, labels);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

/// Fusion head retrained with modality `m` zeroed, then applied to validation.
Matrix retrained_ablation_logits(const Model& model, const Batch& train, const Batch& val, int m,
                                 const ContributionConfig& cfg) {
  std::vector<bool> mask(static_cast<std::size_t>(model.modalities()), false);
  mask[static_cast<std::size_t>(m)] = true;

  const Matrix train_in = concat_latents(model.infer(train.features, mask).latents);
  FusionHead head = model.fusion();
  for (auto* l : {&head.hidden, &head.out}) {
    l->zero_grad();
    l->vel_weight.setZero();
    l->vel_bias.setZero();
  }
  for (int step = 0; step < cfg.retrain_steps; ++step) {
    const auto out = head.forward(train_in);
    const auto ce = softmax_cross_entropy(out.logits, train.labels);
    head.backward(ce.grad_logits);
    sgd_momentum_step(head.hidden, cfg.retrain_lr, 0.9);
    sgd_momentum_step(head.out, cfg.retrain_lr, 0.9);
  }
  const Matrix val_in = concat_latents(model.infer(val.features, mask).latents);
  return head.apply(val_in).logits;
}

}  // namespace

std::string to_string(ContributionMode mode) {
  switch (mode) {
    case ContributionMode::dxi: return "dxi";
    case ContributionMode::d_plus_i: return "d-plus-i";
    case ContributionMode::d_only: return "d-only";
    case ContributionMode::i_only: return "i-only";
    case ContributionMode::kl: return "kl";
  }
  return "?";
}

std::string to_string(AblationMode mode) { return mode == AblationMode::mask ? "mask" : "retrain"; }

double unimodal_confidence(std::span<const double> probs_true_label) {
  if (probs_true_label.empty()) throw ArgumentError("unimodal_confidence: empty input");
  return std::accumulate(probs_true_label.begin(), probs_true_label.end(), 0.0) /
         static_cast<double>(probs_true_label.size());
}

double marginal_contribution(std::span<const double> full_logprobs, std::span<const double> ablated_logprobs) {
  if (full_logprobs.size() != ablated_logprobs.size())
    throw ArgumentError("marginal_contribution: lengths differ (" + std::to_string(full_logprobs.size()) +
                        " vs " + std::to_string(ablated_logprobs.size()) + ")");
  if (full_logprobs.empty()) throw ArgumentError("marginal_contribution: empty input");
  double sum = 0.0;
  for (std::size_t i = 0; i < full_logprobs.size(); ++i)
    sum += std::max(full_logprobs[i], kLogFloor) - std::max(ablated_logprobs[i], kLogFloor);
  return sum / static_cast<double>(full_logprobs.size());
}

PerformanceHistory::PerformanceHistory(int modalities, int capacity)
    : modalities_(modalities), capacity_(capacity) {
  if (modalities < 1 || capacity < 1) throw ArgumentError("PerformanceHistory: sizes must be positive");
  ring_.reserve(static_cast<std::size_t>(capacity));
}

void PerformanceHistory::record(int epoch, std::span<const double> per_modality) {
  if (static_cast<int>(per_modality.size()) != modalities_)
    throw ArgumentError("PerformanceHistory: expected " + std::to_string(modalities_) + " values");
  if (auto last = latest_epoch(); last && epoch <= *last)
    throw ArgumentError("PerformanceHistory: epochs must be recorded in increasing order");
  for (double v : per_modality)
    if (!(v >= 0.0 && v <= 1.0)) throw ArgumentError("PerformanceHistory: performance outside [0, 1]");
  Entry e{epoch, {per_modality.begin(), per_modality.end()}};
  if (static_cast<int>(ring_.size()) < capacity_) {
    ring_.push_back(std::move(e));
  } else {
    ring_[head_] = std::move(e);
    head_ = (head_ + 1) % ring_.size();
  }
}

std::optional<double> PerformanceHistory::at(int modality, int epoch) const {
  for (const auto& e : ring_)
    if (e.epoch == epoch) return e.values.at(static_cast<std::size_t>(modality));
  return std::nullopt;
}

std::optional<int> PerformanceHistory::latest_epoch() const {
  if (ring_.empty()) return std::nullopt;
  const std::size_t newest = static_cast<int>(ring_.size()) < capacity_ ? ring_.size() - 1
                                                                         : (head_ + ring_.size() - 1) % ring_.size();
  return ring_[newest].epoch;
}

double relative_improvement(const PerformanceHistory& hist, int modality, int epoch, int lag, double eps) {
  if (lag < 1) throw ArgumentError("relative_improvement: lag must be >= 1");
  if (!(eps > 0.0)) throw ArgumentError("relative_improvement: eps must be positive");
  if (epoch < lag) return 1.0;
  const auto now = hist.at(modality, epoch);
  const auto then = hist.at(modality, epoch - lag);
  if (!now || !then) return 1.0;
  const double r = (*now - *then) / std::max(*then, eps);
  return std::clamp(r, kMinRelImprove, kMaxRelImprove);
}

double confidence_score(double phi, double r) { return std::max(phi, 0.0) * r; }

double modality_weight(double d, double i) { return std::max(d * i, kMinWeight); }

Vector ContributionReport::weights() const {
  Vector w(static_cast<Index>(modality.size()));
  for (std::size_t m = 0; m < modality.size(); ++m) w[static_cast<Index>(m)] = modality[m].weight;
  return w;
}

double mean_symmetric_kl(const Matrix& p, const Matrix& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols())
    throw DimensionError("mean_symmetric_kl: " + shape_str(p) + " vs " + shape_str(q));
  if (p.rows() == 0) return 0.0;
  const auto pf = p.array().max(1e-12);
  const auto qf = q.array().max(1e-12);
  const double total = ((pf - qf) * (pf.log() - qf.log())).sum();
  return total / static_cast<double>(p.rows());
}

ContributionReport compute_report(const Model& model, const Batch& val, PerformanceHistory& hist, int epoch,
                                  const ContributionConfig& cfg, const Batch* train) {
  const int M = model.modalities();
  if (val.size() == 0) throw ArgumentError("compute_report: empty validation batch");
  if (val.modalities() != M) throw DimensionError("compute_report: validation modality count differs from model");
  if (hist.modalities() != M) throw ArgumentError("compute_report: history modality count differs from model");
  if (cfg.ablation == AblationMode::retrain && train == nullptr)
    throw ArgumentError("compute_report: retrain ablation needs the training batch");

  const Inference full = model.infer(val.features);
  const auto full_logp = true_label_logprobs(full.fusion_logits, val.labels);

  ContributionReport report;
  report.epoch = epoch;
  report.modality.resize(static_cast<std::size_t>(M));

  std::vector<double> perf(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    const auto probs = true_label_probs(full.unimodal_logits[static_cast<std::size_t>(m)], val.labels);
    perf[static_cast<std::size_t>(m)] = std::clamp(unimodal_confidence(probs), 0.0, 1.0);
  }
  hist.record(epoch, perf);

  const Matrix fusion_probs = softmax_rows(full.fusion_logits);
  for (int m = 0; m < M; ++m) {
    const auto mi = static_cast<std::size_t>(m);
    auto& c = report.modality[mi];
    c.unimodal_conf = perf[mi];

    try {
      const auto est = gaussian_mi_detailed(full.latents[mi], full.fusion_hidden);
      c.info_nats = est.nats;
      if (est.undersampled) ++report.undersampled_mi;
    } catch (const DegenerateCovarianceError&) {
      c.info_nats = 0.0;
      ++report.degenerate_mi;
    }

    Matrix ablated_logits;
    if (cfg.ablation == AblationMode::mask) {
      std::vector<bool> mask(static_cast<std::size_t>(M), false);
      mask[mi] = true;
      ablated_logits = model.infer(val.features, mask).fusion_logits;
    } else {
      ablated_logits = retrained_ablation_logits(model, *train, val, m, cfg);
    }
    c.marginal = marginal_contribution(full_logp, true_label_logprobs(ablated_logits, val.labels));
    c.rel_improve = relative_improvement(hist, m, epoch, cfg.lag, cfg.eps);
    c.confidence = confidence_score(c.marginal, c.rel_improve);

    switch (cfg.mode) {
      case ContributionMode::dxi: c.weight = modality_weight(c.confidence, c.info_nats); break;
      case ContributionMode::d_plus_i: c.weight = std::max(c.confidence + c.info_nats, kMinWeight); break;
      case ContributionMode::d_only: c.weight = std::max(c.confidence, kMinWeight); break;
      case ContributionMode::i_only: c.weight = std::max(c.info_nats, kMinWeight); break;
      case ContributionMode::kl:
        c.weight = std::max(mean_symmetric_kl(softmax_rows(full.unimodal_logits[mi]), fusion_probs), kMinWeight);
        break;
    }
  }
  return report;
}

}  // namespace cal
