#include "faim/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace faim {

GradCheckResult finite_diff_check(const std::function<Tensor()>& loss, std::vector<Tensor> params, double eps) {
  std::vector<bool> saved_flags;
  for (auto& p : params) {
    saved_flags.push_back(p.requires_grad());
    p.zero_grad();
    p.set_requires_grad(true);
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor out = loss();
    tape.backward(out);
  }
  for (auto& p : params) {
    const Tensor g = p.grad_tensor();
    analytic.emplace_back(g.data().begin(), g.data().end());
  }

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto values = params[pi].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double orig = values[i];
      values[i] = orig + eps;
      const double up = loss().item();
      values[i] = orig - eps;
      const double down = loss().item();
      values[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), 1e-12});
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = pi;
        result.worst_index = i;
        result.analytic_at_worst = a;
        result.numeric_at_worst = numeric;
      }
    }
  }
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    params[pi].zero_grad();
    params[pi].set_requires_grad(saved_flags[pi]);
  }
  return result;
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  Tensor leaf = x.clone();
  return finite_diff_check([&] { return f(leaf); }, {leaf}, eps).max_rel_error;
}

}  // namespace faim
