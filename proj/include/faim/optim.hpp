#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "faim/tensor.hpp"

namespace faim {

/// Moments and hyperparameters of the decoupled-weight-decay Adam optimizer.
struct AdamWState {
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// One AdamW update in place:
///   p <- p * (1 - lr * wd)
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
/// Moment buffers are allocated on the first call. A parameter without an
/// accumulated gradient is treated as having a zero gradient.
void adamw_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamWState& state);

/// Same update using each parameter's own accumulated gradient.
void adamw_step(std::span<Tensor> params, AdamWState& state);

}  // namespace faim
