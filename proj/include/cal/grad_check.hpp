#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

namespace cal {

/// A flat parameter block and its analytic gradient.
template <typename Scalar>
struct ParamRef {
  Scalar* value;
  const Scalar* grad;
  long size;
};

template <typename Scalar>
struct GradCheckResult {
  Scalar max_rel_error{};
  long worst_block = -1;
  long worst_index = -1;
  Scalar analytic{};
  Scalar numeric{};
};

/// Central differences of `loss` at step h against the stored analytic
/// gradients. The error per coordinate is |a - fd| / max(|a|, |fd|, 1e-8).
/// Every parameter is restored before returning.
template <typename Scalar>
GradCheckResult<Scalar> grad_check_detailed(const std::function<Scalar()>& loss,
                                            std::span<const ParamRef<Scalar>> params, Scalar step) {
  GradCheckResult<Scalar> result;
  for (std::size_t b = 0; b < params.size(); ++b) {
    const auto& p = params[b];
    for (long i = 0; i < p.size; ++i) {
      const Scalar saved = p.value[i];
      p.value[i] = saved + step;
      const Scalar up = loss();
      p.value[i] = saved - step;
      const Scalar down = loss();
      p.value[i] = saved;
      const Scalar fd = (up - down) / (Scalar(2) * step);
      const Scalar a = p.grad[i];
      const Scalar denom = std::max({std::abs(a), std::abs(fd), Scalar(1e-8)});
      const Scalar err = std::abs(a - fd) / denom;
      if (err > result.max_rel_error || result.worst_block < 0) {
        result.max_rel_error = err;
        result.worst_block = static_cast<long>(b);
        result.worst_index = i;
        result.analytic = a;
        result.numeric = fd;
      }
    }
  }
  return result;
}

template <typename Scalar>
Scalar grad_check(const std::function<Scalar()>& loss, std::span<const ParamRef<Scalar>> params,
                  Scalar step) {
  return grad_check_detailed(loss, params, step).max_rel_error;
}

}  // namespace cal
