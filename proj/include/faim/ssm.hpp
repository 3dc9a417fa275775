#pragma once

#include <utility>

#include "faim/layers.hpp"

namespace faim {

/// Zero-order-hold discretization of one diagonal state entry.
struct ZohEntry {
  double a_bar;
  double b_bar;
};

/// a_bar = exp(delta*a); b_bar = (delta*a)^-1 (exp(delta*a) - 1) * delta * b,
/// replaced by its limit delta*b when |delta*a| < 1e-8.
ZohEntry discretize(double a, double b, double delta);

/// Tensor form for diagonal A[dim, state], B[state], delta[dim]:
/// returns (A_bar[dim, state], B_bar[dim, state]).
std::pair<Tensor, Tensor> discretize(const Tensor& a, const Tensor& b, const Tensor& delta);

/// Sequential selective scan over x[..., tokens, dim] with h_0 = 0:
///   h_t = A_bar_t * h_{t-1} + B_bar_t * x_t,  y_t[d] = sum_s C_t[s] h_t[d, s]
/// where A_bar_t, B_bar_t come from discretize(A, B_t, delta_t).
/// Shapes: delta like x; a [dim, state]; b, c [..., tokens, state]. Differentiable
/// in every input.
Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c);

struct SsmParams {
  Tensor a_log;       // [dim, state]; A = -exp(a_log)
  Tensor w_b;         // [dim, state]
  Tensor w_c;         // [dim, state]
  Tensor w_delta;     // [dim, dim]
  Tensor delta_bias;  // [dim]

  /// A_log = log(1..state) per dim; delta_bias so that softplus(bias) is
  /// log-uniform in [1e-3, 1e-1].
  static SsmParams init(std::size_t dim, std::size_t state, Rng& rng);
  Tensor a() const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

/// Input-dependent projections (B_t = x_t W_B, C_t = x_t W_C,
/// delta_t = softplus(x_t W_delta + bias)) followed by selective_scan.
Tensor ssm_scan(const SsmParams& params, const Tensor& x);

struct ImbOptions {
  bool share_in_proj = false;  // branches and gate all use in_proj_1
  bool concat_fusion = false;  // fuse [H1, H2] by concatenation instead of the sum
};

struct ImbParams {
  Linear in_proj_1, in_proj_2, gate_proj;
  ConvParams conv_1, conv_2;  // kernel lengths k1 (default 2) and k2 (default 4)
  SsmParams ssm_1, ssm_2;
  NormParams ln_1, ln_2;
  ConvParams conv_3;  // depthwise, length k3, over dim (or 2*dim for concat fusion)
  Linear out_proj;    // dim (or 2*dim) -> dim
  double ln_eps = 1e-5;

  static ImbParams init(std::size_t dim, std::size_t state, std::size_t k1, std::size_t k2, std::size_t k3,
                        bool concat_fusion, Rng& rng);
  void collect(const std::string& prefix, NamedTensors& out) const;
};

/// One branch: linear -> causal conv -> SiLU -> selective scan -> layer norm.
Tensor imb_branch(const Tensor& tokens, int branch_index, const ImbParams& params, const ImbOptions& options = {});

struct ImbActivations {
  Tensor gate;
  Tensor h1, h2;
  Tensor cross_1, cross_2;  // silu(h1)*h2*gate and silu(h2)*h1*gate
};

struct ImbResult {
  Tensor output;
  ImbActivations activations;
};

/// Cross-gated dual-branch block fused by conv_3 and the output projection.
ImbResult imb_forward(const Tensor& tokens, const ImbParams& params, const ImbOptions& options = {});

}  // namespace faim
