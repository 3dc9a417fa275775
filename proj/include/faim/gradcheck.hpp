#pragma once

#include <functional>
#include <vector>

#include "faim/tensor.hpp"

namespace faim {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences. Relative error per coordinate is
///   |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

/// Multi-parameter form: `loss` reads the given leaf tensors, which are
/// perturbed in place one coordinate at a time and restored afterwards.
GradCheckResult finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> params, double eps = 1e-5);

}  // namespace faim
