#include "faim/afb.hpp"

#include "faim/ops.hpp"

namespace faim {

using spectral::BandDirection;
using spectral::Spectrum;

PsiFilter PsiFilter::init(std::size_t dim, std::size_t hidden, Rng& rng) {
  return {Linear::init(2 * dim, hidden, rng), Linear::init(hidden, 2 * dim, rng)};
}

void PsiFilter::collect(const std::string& prefix, NamedTensors& out) const {
  in.collect(prefix + ".in", out);
  this->out.collect(prefix + ".out", out);
}

ComplexTensor psi_filter(const PsiFilter& p, const Spectrum& s) {
  const std::size_t dim = s.bins.re.extent(-1);
  if (p.dim() != dim) {
    throw ShapeError("psi filter width " + std::to_string(2 * p.dim()) + " does not match 2*dim = " + std::to_string(2 * dim));
  }
  const Tensor stacked = ops::concat({s.bins.re, s.bins.im}, -1);
  const Tensor g = p.out(ops::relu(p.in(stacked)));
  return {ops::narrow(g, -1, 0, dim), ops::narrow(g, -1, dim, dim)};
}

Spectrum psi_apply(const PsiFilter& p, const Spectrum& s) { return spectral::complex_multiply(psi_filter(p, s), s); }

AfbParams AfbParams::init(std::size_t dim, std::size_t hidden, double theta_high, double theta_low, double tau, Rng& rng) {
  AfbParams a;
  a.theta_high = constant_param({1}, theta_high);
  a.theta_low = constant_param({1}, theta_low);
  a.psi_global = PsiFilter::init(dim, hidden, rng);
  a.psi_high_local = PsiFilter::init(dim, hidden, rng);
  a.psi_low_local = PsiFilter::init(dim, hidden, rng);
  a.tau = tau;
  return a;
}

void AfbParams::collect(const std::string& prefix, NamedTensors& out) const {
  out.emplace_back(prefix + ".theta_high", theta_high);
  out.emplace_back(prefix + ".theta_low", theta_low);
  psi_global.collect(prefix + ".psi_global", out);
  psi_high_local.collect(prefix + ".psi_high_local", out);
  psi_low_local.collect(prefix + ".psi_low_local", out);
}

AfbResult afb_forward(const Tensor& tokens, const AfbParams& params, const AfbOptions& options) {
  if (tokens.rank() < 2 || tokens.extent(-2) < 1) {
    throw ShapeError("afb_forward expects [..., tokens >= 1, dim], got " + shape_str(tokens.shape()));
  }
  AfbActivations acts;
  acts.spectrum = spectral::rfft(tokens);
  const Spectrum& f = acts.spectrum;

  acts.global = psi_apply(params.psi_global, f);
  Spectrum integrated = acts.global;

  const bool need_low_band = options.use_low || (options.use_high && options.literal_eq10);
  if (need_low_band) {
    acts.low_mask = spectral::band_mask(f, params.theta_low, BandDirection::kKeepAbove, params.tau);
    acts.low_band = spectral::apply_mask(f, *acts.low_mask);
  }
  if (options.use_high) {
    acts.high_mask = spectral::band_mask(f, params.theta_high, BandDirection::kKeepBelow, params.tau);
    acts.high_band = spectral::apply_mask(f, *acts.high_mask);
    const ComplexTensor g = psi_filter(params.psi_high_local, *acts.high_band);
    acts.local_high = spectral::complex_multiply(g, options.literal_eq10 ? *acts.low_band : *acts.high_band);
    integrated = spectral::add(integrated, *acts.local_high);
  }
  if (options.use_low) {
    acts.local_low = psi_apply(params.psi_low_local, *acts.low_band);
    integrated = spectral::add(integrated, *acts.local_low);
  }
  acts.integrated = integrated;
  Tensor out = spectral::irfft(integrated);
  return {std::move(out), std::move(acts)};
}

}  // namespace faim
