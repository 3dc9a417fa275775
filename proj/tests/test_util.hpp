#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "faim/rng.hpp"
#include "faim/tensor.hpp"

namespace faim::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return a.size() == b.size() ? m : INFINITY;
}

}  // namespace faim::testing
