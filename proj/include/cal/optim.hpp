#pragma once

#include "cal/layers.hpp"

namespace cal {

/// v <- momentum * v + (g + weight_decay * theta); theta <- theta - lr * v.
/// Gradient accumulators are zeroed afterwards.
template <typename Scalar>
void sgd_momentum_step(Linear<Scalar>& layer, Scalar lr, Scalar momentum, Scalar weight_decay = 0) {
  layer.vel_weight = momentum * layer.vel_weight + layer.grad_weight + weight_decay * layer.weight;
  layer.vel_bias = momentum * layer.vel_bias + layer.grad_bias + weight_decay * layer.bias;
  layer.weight -= lr * layer.vel_weight;
  layer.bias -= lr * layer.vel_bias;
  layer.zero_grad();
}

}  // namespace cal
