#pragma once

#include <vector>

#include "faim/tensor.hpp"

// Differentiable primitives. Binary elementwise ops follow numpy broadcasting.
namespace faim::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sin(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor softplus(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// Mean over one axis, which is removed from the result.
Tensor mean_axis(const Tensor& x, int axis);
Tensor sum_axis(const Tensor& x, int axis);

Tensor reshape(const Tensor& x, Shape shape);
/// Contiguous sub-range [start, start+len) along `axis`.
Tensor narrow(const Tensor& x, int axis, std::size_t start, std::size_t len);
Tensor concat(const std::vector<Tensor>& parts, int axis);

/// x[..., in] · w[in, out] -> [..., out].
Tensor matmul(const Tensor& x, const Tensor& w);
/// matmul plus a broadcast bias[out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

/// Depthwise causal convolution along the token axis of x[..., tokens, dim].
/// kernel[k, dim]: tap k-1 multiplies the current token, tap 0 the token k-1
/// steps back; positions before the start are zero.
Tensor causal_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

/// Normalizes over the last axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Log-softmax over the last axis.
Tensor log_softmax(const Tensor& x);

}  // namespace faim::ops
