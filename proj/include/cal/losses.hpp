#pragma once

#include "cal/errors.hpp"
#include "cal/tensor.hpp"

#include <cmath>
#include <string>

namespace cal {

/// Row-wise softmax, stabilised by subtracting each row's max.
template <typename Scalar>
MatrixX<Scalar> softmax_rows(const MatrixX<Scalar>& logits) {
  MatrixX<Scalar> out = logits;
  for (Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
  return out;
}

/// Row-wise log-softmax via log-sum-exp.
template <typename Scalar>
MatrixX<Scalar> log_softmax_rows(const MatrixX<Scalar>& logits) {
  MatrixX<Scalar> out = logits;
  for (Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    const Scalar m = row.maxCoeff();
    const Scalar lse = m + std::log((row.array() - m).exp().sum());
    row.array() -= lse;
  }
  return out;
}

template <typename Scalar>
struct CrossEntropy {
  Scalar loss{};  // mean over the batch
  MatrixX<Scalar> probs;
  MatrixX<Scalar> grad_logits;  // d loss / d logits, already divided by N
};

template <typename Scalar>
CrossEntropy<Scalar> softmax_cross_entropy(const MatrixX<Scalar>& logits, const Labels& labels) {
  const Index n = logits.rows();
  const Index k = logits.cols();
  if (static_cast<Index>(labels.size()) != n)
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         shape_str(logits) + " logits");
  if (n == 0) throw ArgumentError("cross_entropy: empty batch");
  for (int y : labels)
    if (y < 0 || y >= k)
      throw ArgumentError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(k) + ")");

  const MatrixX<Scalar> logp = log_softmax_rows(logits);
  CrossEntropy<Scalar> ce;
  ce.probs = logp.array().exp().matrix();
  ce.grad_logits = ce.probs;
  Scalar total = 0;
  for (Index i = 0; i < n; ++i) {
    total -= logp(i, labels[i]);
    ce.grad_logits(i, labels[i]) -= Scalar(1);
  }
  ce.loss = total / static_cast<Scalar>(n);
  ce.grad_logits /= static_cast<Scalar>(n);
  return ce;
}

/// Entropy (nats) of the empirical label distribution.
inline double label_entropy(const Labels& labels, int num_classes) {
  if (labels.empty()) return 0.0;
  std::vector<double> counts(static_cast<std::size_t>(num_classes), 0.0);
  for (int y : labels) counts.at(static_cast<std::size_t>(y)) += 1.0;
  double h = 0.0;
  const double n = static_cast<double>(labels.size());
  for (double c : counts)
    if (c > 0) h -= (c / n) * std::log(c / n);
  return h;
}

}  // namespace cal
