#pragma once

#include "cal/errors.hpp"
#include "cal/rng.hpp"
#include "cal/tensor.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace cal {

/// Fully connected layer y = x W + b with gradient accumulators and momentum
/// buffers. `forward` caches its input for one `backward`; `apply` is the
/// const inference path and caches nothing.
template <typename Scalar>
class Linear {
 public:
  using Mat = MatrixX<Scalar>;
  using Row = RowVectorX<Scalar>;

  Linear() = default;
  Linear(Index in_dim, Index out_dim)
      : weight(Mat::Zero(in_dim, out_dim)),
        bias(Row::Zero(out_dim)),
        grad_weight(Mat::Zero(in_dim, out_dim)),
        grad_bias(Row::Zero(out_dim)),
        vel_weight(Mat::Zero(in_dim, out_dim)),
        vel_bias(Row::Zero(out_dim)) {}

  /// U(-1/sqrt(in), 1/sqrt(in)) for weights and bias.
  static Linear uniform_init(Index in_dim, Index out_dim, Rng& rng) {
    Linear layer(in_dim, out_dim);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (Index i = 0; i < layer.weight.size(); ++i)
      layer.weight.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    for (Index i = 0; i < layer.bias.size(); ++i)
      layer.bias[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
    return layer;
  }

  Index in_dim() const { return weight.rows(); }
  Index out_dim() const { return weight.cols(); }

  Mat apply(const Mat& x) const {
    if (x.cols() != weight.rows())
      throw DimensionError("linear: input " + shape_str(x) + " incompatible with weight " +
                           shape_str(weight));
    Mat out = x * weight;
    out.rowwise() += bias;
    return out;
  }

  Mat forward(const Mat& x) {
    Mat out = apply(x);
    cached_input_ = x;
    return out;
  }

  /// Accumulates dW += x^T g and db += colsum(g); returns g W^T.
  Mat backward(const Mat& grad_out) {
    if (!cached_input_) throw StateError("linear: backward called without a preceding forward");
    const Mat& x = *cached_input_;
    if (grad_out.rows() != x.rows() || grad_out.cols() != weight.cols())
      throw DimensionError("linear: grad " + shape_str(grad_out) + " does not match output " +
                           std::to_string(x.rows()) + "x" + std::to_string(weight.cols()));
    grad_weight.noalias() += x.transpose() * grad_out;
    grad_bias += grad_out.colwise().sum();
    Mat grad_in = grad_out * weight.transpose();
    cached_input_.reset();
    return grad_in;
  }

  bool has_cache() const { return cached_input_.has_value(); }

  void zero_grad() {
    grad_weight.setZero();
    grad_bias.setZero();
  }

  Index parameter_count() const { return weight.size() + bias.size(); }

  Mat weight;
  Row bias;
  Mat grad_weight;
  Row grad_bias;
  Mat vel_weight;
  Row vel_bias;

 private:
  std::optional<Mat> cached_input_;
};

enum class ActivationKind { relu, tanh };

inline std::string to_string(ActivationKind k) { return k == ActivationKind::relu ? "relu" : "tanh"; }

template <typename Derived>
auto activate(const Eigen::MatrixBase<Derived>& x, ActivationKind kind) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out(x.rows(), x.cols());
  if (kind == ActivationKind::relu)
    out = x.array().max(Scalar(0)).matrix();
  else
    out = x.array().tanh().matrix();
  return out;
}

/// Element-wise nonlinearity with a cached backward.
template <typename Scalar>
class Activation {
 public:
  using Mat = MatrixX<Scalar>;

  explicit Activation(ActivationKind kind = ActivationKind::relu) : kind_(kind) {}

  ActivationKind kind() const { return kind_; }

  Mat apply(const Mat& x) const { return activate(x, kind_); }

  Mat forward(const Mat& x) {
    Mat y = apply(x);
    // relu needs the sign of the input, tanh the output.
    cached_ = kind_ == ActivationKind::relu ? x : y;
    return y;
  }

  Mat backward(const Mat& grad_out) {
    if (!cached_) throw StateError("activation: backward called without a preceding forward");
    if (grad_out.rows() != cached_->rows() || grad_out.cols() != cached_->cols())
      throw DimensionError("activation: grad " + shape_str(grad_out) + " vs cached " +
                           shape_str(*cached_));
    Mat grad_in;
    if (kind_ == ActivationKind::relu)
      grad_in = (cached_->array() > Scalar(0)).select(grad_out.array(), Scalar(0)).matrix();
    else
      grad_in = (grad_out.array() * (Scalar(1) - cached_->array().square())).matrix();
    cached_.reset();
    return grad_in;
  }

 private:
  ActivationKind kind_;
  std::optional<Mat> cached_;
};

}  // namespace cal
