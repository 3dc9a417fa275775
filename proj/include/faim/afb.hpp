#pragma once

#include <optional>

#include "faim/layers.hpp"
#include "faim/spectral.hpp"

namespace faim {

/// Per-bin complex filter generator: [Re, Im] (2*dim) -> linear -> ReLU ->
/// linear -> [Re g, Im g] (2*dim). Weights are shared across bins.
struct PsiFilter {
  Linear in;   // [2*dim, hidden]
  Linear out;  // [hidden, 2*dim]

  static PsiFilter init(std::size_t dim, std::size_t hidden, Rng& rng);
  std::size_t dim() const { return in.weight.extent(0) / 2; }
  void collect(const std::string& prefix, NamedTensors& out) const;
};

/// Filter values g[k] produced by psi for every bin of `s`.
ComplexTensor psi_filter(const PsiFilter& p, const spectral::Spectrum& s);

/// bins'[k] = g[k] * bins[k] (complex product) with g = psi_filter(p, s).
spectral::Spectrum psi_apply(const PsiFilter& p, const spectral::Spectrum& s);

struct AfbOptions {
  bool use_high = true;      // local filter on the keep-below (high-frequency-suppressed) band
  bool use_low = true;       // local filter on the keep-above band
  bool literal_eq10 = false; // high-band filter multiplies the low band instead of its own
};

struct AfbParams {
  Tensor theta_high;  // [1]
  Tensor theta_low;   // [1]
  PsiFilter psi_global;
  PsiFilter psi_high_local;
  PsiFilter psi_low_local;
  double tau = 0.02;

  static AfbParams init(std::size_t dim, std::size_t hidden, double theta_high, double theta_low, double tau, Rng& rng);
  void collect(const std::string& prefix, NamedTensors& out) const;
};

/// Intermediates of one adaptive filtering pass.
struct AfbActivations {
  spectral::Spectrum spectrum;
  std::optional<spectral::BandMask> high_mask;
  std::optional<spectral::BandMask> low_mask;
  std::optional<spectral::Spectrum> high_band;
  std::optional<spectral::Spectrum> low_band;
  spectral::Spectrum global;
  std::optional<spectral::Spectrum> local_high;
  std::optional<spectral::Spectrum> local_low;
  spectral::Spectrum integrated;
};

struct AfbResult {
  Tensor output;  // same shape as the input tokens
  AfbActivations activations;
};

/// FFT along tokens, dual band masks, global plus local psi filters, sum, iFFT.
AfbResult afb_forward(const Tensor& tokens, const AfbParams& params, const AfbOptions& options = {});

}  // namespace faim
