#pragma once

#include <string>
#include <utility>
#include <vector>

#include "faim/rng.hpp"
#include "faim/tensor.hpp"

namespace faim {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Trainable leaf with entries drawn uniformly from [-bound, bound].
Tensor uniform_param(Shape shape, double bound, Rng& rng);
Tensor constant_param(Shape shape, double value);
Tensor normal_param(Shape shape, double stddev, Rng& rng);

struct Linear {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  /// PyTorch-style default: U(-1/sqrt(in), 1/sqrt(in)) for weight and bias.
  static Linear init(std::size_t in, std::size_t out, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

struct NormParams {
  Tensor gamma;
  Tensor beta;

  static NormParams init(std::size_t dim);
  Tensor operator()(const Tensor& x, double eps) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

/// Depthwise causal convolution weights.
struct ConvParams {
  Tensor kernel;  // [k, dim]
  Tensor bias;    // [dim]

  static ConvParams init(std::size_t k, std::size_t dim, Rng& rng);
  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, NamedTensors& out) const;
};

}  // namespace faim
