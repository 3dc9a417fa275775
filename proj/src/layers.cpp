#include "faim/layers.hpp"

#include <cmath>

#include "faim/ops.hpp"

namespace faim {

Tensor uniform_param(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.mutable_data()) v = rng.uniform(-bound, bound);
  return t.set_requires_grad();
}

Tensor constant_param(Shape shape, double value) { return Tensor(std::move(shape), value).set_requires_grad(); }

Tensor normal_param(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.mutable_data()) v = stddev * rng.normal();
  return t.set_requires_grad();
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = uniform_param({in, out}, bound, rng);
  l.bias = uniform_param({out}, bound, rng);
  return l;
}

Tensor Linear::operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }

void Linear::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

NormParams NormParams::init(std::size_t dim) { return {constant_param({dim}, 1.0), constant_param({dim}, 0.0)}; }

Tensor NormParams::operator()(const Tensor& x, double eps) const { return ops::layer_norm(x, gamma, beta, eps); }

void NormParams::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

ConvParams ConvParams::init(std::size_t k, std::size_t dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(k));
  ConvParams c;
  c.kernel = uniform_param({k, dim}, bound, rng);
  c.bias = uniform_param({dim}, bound, rng);
  return c;
}

Tensor ConvParams::operator()(const Tensor& x) const { return ops::causal_conv1d(x, kernel, bias); }

void ConvParams::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".kernel", kernel);
  out.emplace_back(prefix + ".bias", bias);
}

}  // namespace faim
