#include "faim/ssm.hpp"

#include <cmath>
#include <memory>

#include "faim/ops.hpp"

namespace faim {

namespace {

constexpr double kZohLimit = 1e-8;

// phi(z) = (e^z - 1) / z and its derivative, with the z -> 0 limits.
struct Phi {
  double value;
  double slope;
};

Phi phi(double z) {
  if (std::abs(z) < kZohLimit) return {1.0 + 0.5 * z, 0.5 + z / 3.0};
  const double value = std::expm1(z) / z;
  double slope;
  if (std::abs(z) < 1e-3) {
    slope = 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0;
  } else {
    slope = (z * std::exp(z) - std::expm1(z)) / (z * z);
  }
  return {value, slope};
}

// Same as phi(z) given the already computed value and exp(z).
Phi phi_from(double z, double value, double exp_z) {
  if (std::abs(z) < 1e-3) return {value, 0.5 + z / 3.0 + z * z / 8.0 + z * z * z / 30.0};
  return {value, (z * exp_z - value * z) / (z * z)};
}

}  // namespace

ZohEntry discretize(double a, double b, double delta) {
  const double z = delta * a;
  return {std::exp(z), phi(z).value * delta * b};
}

std::pair<Tensor, Tensor> discretize(const Tensor& a, const Tensor& b, const Tensor& delta) {
  if (a.rank() != 2) throw ShapeError("discretize: A must be [dim, state]");
  const std::size_t dim = a.extent(0), state = a.extent(1);
  if (b.size() != state || delta.size() != dim) throw ShapeError("discretize: B must be [state] and delta [dim]");
  Tensor a_bar(Shape{dim, state}), b_bar(Shape{dim, state});
  for (std::size_t d = 0; d < dim; ++d) {
    for (std::size_t s = 0; s < state; ++s) {
      const auto e = discretize(a[d * state + s], b[s], delta[d]);
      a_bar.mutable_data()[d * state + s] = e.a_bar;
      b_bar.mutable_data()[d * state + s] = e.b_bar;
    }
  }
  return {a_bar, b_bar};
}

Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a, const Tensor& b, const Tensor& c) {
  if (x.rank() < 2) throw ShapeError("selective_scan expects x [..., tokens, dim]");
  if (delta.shape() != x.shape()) throw ShapeError("selective_scan: delta must match x");
  if (a.rank() != 2 || a.extent(0) != x.extent(-1)) throw ShapeError("selective_scan: A must be [dim, state]");
  const std::size_t tokens = x.extent(-2), dim = x.extent(-1), state = a.extent(1);
  const std::size_t outer = x.size() / (tokens * dim);
  if (b.size() != outer * tokens * state || c.size() != outer * tokens * state || b.extent(-1) != state ||
      c.extent(-1) != state) {
    throw ShapeError("selective_scan: B and C must be [..., tokens, state]");
  }

  const auto xd = x.data(), dd = delta.data(), ad = a.data(), bd = b.data(), cd = c.data();
  std::vector<double> y(x.size(), 0.0);
  // States after every token, [outer, tokens, dim, state], kept for the reverse pass
  // along with A_bar and phi(delta*A) so the reverse pass needs no exp calls.
  const std::size_t n_cache = outer * tokens * dim * state;
  auto states = std::make_shared<std::vector<double>>(n_cache);
  auto a_bars = std::make_shared<std::vector<double>>(n_cache);
  auto phis = std::make_shared<std::vector<double>>(n_cache);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t d = 0; d < dim; ++d) {
      for (std::size_t s = 0; s < state; ++s) {
        double h = 0.0;
        const double a_ds = ad[d * state + s];
        for (std::size_t t = 0; t < tokens; ++t) {
          const std::size_t xi = (o * tokens + t) * dim + d;
          const std::size_t si = (o * tokens + t) * state + s;
          const std::size_t ci = xi * state + s;
          const double z = dd[xi] * a_ds;
          const double em1 = std::expm1(z);
          const double a_bar = 1.0 + em1;
          const double ph = std::abs(z) < kZohLimit ? 1.0 + 0.5 * z : em1 / z;
          h = a_bar * h + ph * dd[xi] * bd[si] * xd[xi];
          (*states)[ci] = h;
          (*a_bars)[ci] = a_bar;
          (*phis)[ci] = ph;
          y[xi] += cd[si] * h;
        }
      }
    }
  }

  const auto *px = x.impl().get(), *pd = delta.impl().get(), *pa = a.impl().get(), *pb = b.impl().get(),
             *pc = c.impl().get();
  return make_op_result(
      x.shape(), std::move(y), {x, delta, a, b, c},
      [=](const detail::TensorImpl& out, std::span<std::vector<double>*> gin) {
        const auto& gy = out.grad;
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t d = 0; d < dim; ++d) {
            for (std::size_t s = 0; s < state; ++s) {
              const double a_ds = pa->data[d * state + s];
              double gh = 0.0;
              for (std::size_t t = tokens; t-- > 0;) {
                const std::size_t xi = (o * tokens + t) * dim + d;
                const std::size_t si = (o * tokens + t) * state + s;
                const std::size_t ci = xi * state + s;
                const double h = (*states)[ci];
                const double h_prev = t == 0 ? 0.0 : (*states)[ci - dim * state];
                const double dt = pd->data[xi];
                const double bt = pb->data[si];
                const double xt = px->data[xi];
                const double z = dt * a_ds;
                const double a_bar = (*a_bars)[ci];
                const Phi p = phi_from(z, (*phis)[ci], a_bar);
                const double b_bar = p.value * dt * bt;

                gh += gy[xi] * pc->data[si];
                if (gin[4]) (*gin[4])[si] += gy[xi] * h;
                if (gin[0]) (*gin[0])[xi] += gh * b_bar;
                const double g_abar = gh * h_prev;
                const double g_bbar = gh * xt;
                if (gin[1]) (*gin[1])[xi] += g_abar * a_ds * a_bar + g_bbar * bt * (p.value + z * p.slope);
                if (gin[2]) (*gin[2])[d * state + s] += g_abar * dt * a_bar + g_bbar * bt * dt * dt * p.slope;
                if (gin[3]) (*gin[3])[si] += g_bbar * dt * p.value;
                gh *= a_bar;
              }
            }
          }
        }
      });
}

SsmParams SsmParams::init(std::size_t dim, std::size_t state, Rng& rng) {
  SsmParams p;
  p.a_log = Tensor(Shape{dim, state});
  for (std::size_t d = 0; d < dim; ++d)
    for (std::size_t s = 0; s < state; ++s) p.a_log.mutable_data()[d * state + s] = std::log(static_cast<double>(s + 1));
  p.a_log.set_requires_grad();
  const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
  p.w_b = uniform_param({dim, state}, bound, rng);
  p.w_c = uniform_param({dim, state}, bound, rng);
  p.w_delta = uniform_param({dim, dim}, bound, rng);
  p.delta_bias = Tensor(Shape{dim});
  for (double& v : p.delta_bias.mutable_data()) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    v = dt + std::log(-std::expm1(-dt));  // inverse softplus
  }
  p.delta_bias.set_requires_grad();
  return p;
}

Tensor SsmParams::a() const { return ops::neg(ops::exp(a_log)); }

void SsmParams::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".a_log", a_log);
  out.emplace_back(prefix + ".w_b", w_b);
  out.emplace_back(prefix + ".w_c", w_c);
  out.emplace_back(prefix + ".w_delta", w_delta);
  out.emplace_back(prefix + ".delta_bias", delta_bias);
}

Tensor ssm_scan(const SsmParams& params, const Tensor& x) {
  const Tensor delta = ops::softplus(ops::linear(x, params.w_delta, params.delta_bias));
  return selective_scan(x, delta, params.a(), ops::matmul(x, params.w_b), ops::matmul(x, params.w_c));
}

ImbParams ImbParams::init(std::size_t dim, std::size_t state, std::size_t k1, std::size_t k2, std::size_t k3,
                          bool concat_fusion, Rng& rng) {
  ImbParams p;
  p.in_proj_1 = Linear::init(dim, dim, rng);
  p.in_proj_2 = Linear::init(dim, dim, rng);
  p.gate_proj = Linear::init(dim, dim, rng);
  p.conv_1 = ConvParams::init(k1, dim, rng);
  p.conv_2 = ConvParams::init(k2, dim, rng);
  p.ssm_1 = SsmParams::init(dim, state, rng);
  p.ssm_2 = SsmParams::init(dim, state, rng);
  p.ln_1 = NormParams::init(dim);
  p.ln_2 = NormParams::init(dim);
  const std::size_t fused = concat_fusion ? 2 * dim : dim;
  p.conv_3 = ConvParams::init(k3, fused, rng);
  p.out_proj = Linear::init(fused, dim, rng);
  return p;
}

void ImbParams::collect(const std::string& prefix, NamedTensors& out) const {
  in_proj_1.collect(prefix + ".in_proj_1", out);
  in_proj_2.collect(prefix + ".in_proj_2", out);
  gate_proj.collect(prefix + ".gate_proj", out);
  conv_1.collect(prefix + ".conv_1", out);
  conv_2.collect(prefix + ".conv_2", out);
  ssm_1.collect(prefix + ".ssm_1", out);
  ssm_2.collect(prefix + ".ssm_2", out);
  ln_1.collect(prefix + ".ln_1", out);
  ln_2.collect(prefix + ".ln_2", out);
  conv_3.collect(prefix + ".conv_3", out);
  out_proj.collect(prefix + ".out_proj", out);
}

Tensor imb_branch(const Tensor& tokens, int branch_index, const ImbParams& params, const ImbOptions& options) {
  if (branch_index != 1 && branch_index != 2) throw ContractError("imb_branch index must be 1 or 2");
  const bool first = branch_index == 1;
  const Linear& proj = (first || options.share_in_proj) ? params.in_proj_1 : params.in_proj_2;
  const ConvParams& conv = first ? params.conv_1 : params.conv_2;
  const SsmParams& ssm = first ? params.ssm_1 : params.ssm_2;
  const NormParams& ln = first ? params.ln_1 : params.ln_2;
  return ln(ssm_scan(ssm, ops::silu(conv(proj(tokens)))), params.ln_eps);
}

ImbResult imb_forward(const Tensor& tokens, const ImbParams& params, const ImbOptions& options) {
  ImbActivations acts;
  acts.gate = options.share_in_proj ? params.in_proj_1(tokens) : params.gate_proj(tokens);
  acts.h1 = imb_branch(tokens, 1, params, options);
  acts.h2 = imb_branch(tokens, 2, params, options);
  acts.cross_1 = ops::mul(ops::mul(ops::silu(acts.h1), acts.h2), acts.gate);
  acts.cross_2 = ops::mul(ops::mul(ops::silu(acts.h2), acts.h1), acts.gate);
  const Tensor fused =
      options.concat_fusion ? ops::concat({acts.cross_1, acts.cross_2}, -1) : ops::add(acts.cross_1, acts.cross_2);
  Tensor out = params.out_proj(params.conv_3(fused));
  return {std::move(out), std::move(acts)};
}

}  // namespace faim
