#include "faim/optim.hpp"

#include <cmath>

namespace faim {

namespace {

void update(Tensor& param, std::span<const double> grad, std::vector<double>& m, std::vector<double>& v,
            const AdamWState& st, double bias1, double bias2) {
  auto p = param.mutable_data();
  const double decay = 1.0 - st.lr * st.weight_decay;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double g = grad.empty() ? 0.0 : grad[i];
    m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g;
    v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g * g;
    const double m_hat = m[i] / bias1;
    const double v_hat = v[i] / bias2;
    p[i] = p[i] * decay - st.lr * m_hat / (std::sqrt(v_hat) + st.eps);
  }
}

void ensure_moments(std::span<Tensor> params, AdamWState& state) {
  if (state.m.size() == params.size()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (state.m[i].size() != params[i].size() || state.v[i].size() != params[i].size()) {
        throw ShapeError("AdamW moment shape does not match parameter " + std::to_string(i));
      }
    }
    return;
  }
  if (!state.m.empty()) throw ShapeError("AdamW parameter count changed between steps");
  for (const auto& p : params) {
    state.m.emplace_back(p.size(), 0.0);
    state.v.emplace_back(p.size(), 0.0);
  }
}

}  // namespace

void adamw_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamWState& state) {
  if (grads.size() != params.size()) throw ShapeError("adamw_step: params/grads count mismatch");
  ensure_moments(params, state);
  ++state.step_count;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size()) throw ShapeError("adamw_step: gradient shape mismatch for parameter " + std::to_string(i));
    update(params[i], grads[i].data(), state.m[i], state.v[i], state, bias1, bias2);
  }
}

void adamw_step(std::span<Tensor> params, AdamWState& state) {
  ensure_moments(params, state);
  ++state.step_count;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < params.size(); ++i) {
    update(params[i], params[i].has_grad() ? params[i].grad() : std::span<const double>{}, state.m[i], state.v[i], state,
           bias1, bias2);
  }
}

}  // namespace faim
