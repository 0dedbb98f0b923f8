#pragma once

#include "cal/errors.hpp"
#include "cal/rng.hpp"
#include "cal/tensor.hpp"

namespace cal {

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

/// Diagonal Gaussian q(z|x) = N(mu, exp(logvar)). Every consumer reads
/// `logvar` through `clamped_logvar`, so exponentials stay in range; the
/// gradient is zero wherever the clamp is active.
template <typename Scalar>
struct GaussianPosterior {
  MatrixX<Scalar> mu;
  MatrixX<Scalar> logvar;

  MatrixX<Scalar> clamped_logvar() const {
    return logvar.array().max(Scalar(kLogvarMin)).min(Scalar(kLogvarMax)).matrix();
  }

  /// 1 where the clamp is inactive, 0 where it saturates.
  MatrixX<Scalar> clamp_mask() const {
    return ((logvar.array() >= Scalar(kLogvarMin)) && (logvar.array() <= Scalar(kLogvarMax)))
        .template cast<Scalar>()
        .matrix();
  }

  void check() const {
    if (mu.rows() != logvar.rows() || mu.cols() != logvar.cols())
      throw DimensionError("posterior: mu " + shape_str(mu) + " vs logvar " + shape_str(logvar));
  }
};

template <typename Scalar>
struct ReparamSample {
  MatrixX<Scalar> z;
  MatrixX<Scalar> noise;  // the standard-normal draw, kept for backward
};

/// z = mu + exp(logvar / 2) * eps, eps ~ N(0, 1) drawn row-major from `rng`.
template <typename Scalar>
ReparamSample<Scalar> reparam_sample(const GaussianPosterior<Scalar>& post, Rng& rng) {
  post.check();
  ReparamSample<Scalar> s;
  s.noise.resize(post.mu.rows(), post.mu.cols());
  for (Index i = 0; i < s.noise.size(); ++i) s.noise.data()[i] = static_cast<Scalar>(rng.normal());
  const MatrixX<Scalar> sigma = (post.clamped_logvar().array() * Scalar(0.5)).exp().matrix();
  s.z = (post.mu.array() + sigma.array() * s.noise.array()).matrix();
  return s;
}

template <typename Scalar>
struct PosteriorGrad {
  MatrixX<Scalar> mu;
  MatrixX<Scalar> logvar;
};

template <typename Scalar>
PosteriorGrad<Scalar> reparam_backward(const GaussianPosterior<Scalar>& post,
                                       const MatrixX<Scalar>& noise, const MatrixX<Scalar>& grad_z) {
  if (grad_z.rows() != post.mu.rows() || grad_z.cols() != post.mu.cols() ||
      noise.rows() != grad_z.rows() || noise.cols() != grad_z.cols())
    throw DimensionError("reparam_backward: grad " + shape_str(grad_z) + " vs posterior " +
                         shape_str(post.mu));
  const MatrixX<Scalar> sigma = (post.clamped_logvar().array() * Scalar(0.5)).exp().matrix();
  PosteriorGrad<Scalar> g;
  g.mu = grad_z;
  g.logvar = (grad_z.array() * noise.array() * sigma.array() * Scalar(0.5) * post.clamp_mask().array()).matrix();
  return g;
}

/// Mean over rows of KL(q || N(0, I)) = 1/2 sum_d (mu^2 + sigma^2 - log sigma^2 - 1).
template <typename Scalar>
Scalar kl_std_normal(const GaussianPosterior<Scalar>& post) {
  post.check();
  if (post.mu.rows() == 0) return Scalar(0);
  const MatrixX<Scalar> lv = post.clamped_logvar();
  const Scalar total =
      Scalar(0.5) * (post.mu.array().square() + lv.array().exp() - lv.array() - Scalar(1)).sum();
  return total / static_cast<Scalar>(post.mu.rows());
}

/// Gradient of `kl_std_normal` with respect to mu and logvar.
template <typename Scalar>
PosteriorGrad<Scalar> kl_std_normal_grad(const GaussianPosterior<Scalar>& post) {
  post.check();
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(std::max<Index>(post.mu.rows(), 1));
  PosteriorGrad<Scalar> g;
  g.mu = post.mu * inv_n;
  g.logvar = ((post.clamped_logvar().array().exp() - Scalar(1)) * Scalar(0.5) * inv_n *
              post.clamp_mask().array())
                 .matrix();
  return g;
}

}  // namespace cal
