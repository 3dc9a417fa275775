#pragma once

#include <complex>
#include <span>
#include <vector>

#include "faim/tensor.hpp"

namespace faim::spectral {

using cplx = std::complex<double>;

bool is_power_of_two(std::size_t n);

/// Unnormalized complex DFT, X[k] = sum_n x[n] e^{-j 2 pi k n / N}; the inverse
/// flips the exponent sign and does not divide by N. Radix-2 iterative for
/// power-of-two lengths, direct O(N^2) summation otherwise.
std::vector<cplx> dft(std::span<const cplx> x, bool inverse = false);

/// Half spectrum of a real signal along the token axis.
struct Spectrum {
  ComplexTensor bins;      // [..., floor(n_time/2)+1, dim]
  std::size_t n_time = 0;  // token count before the transform

  std::size_t n_bins() const { return bins.re.extent(-2); }
};

/// Real-input transform of x[..., tokens, dim] along the token axis; each
/// dim column is transformed independently. Differentiable.
Spectrum rfft(const Tensor& x);

/// Inverse of rfft using the stored n_time. The imaginary parts of the DC and
/// (for even n_time) Nyquist bins do not contribute. Differentiable.
Tensor irfft(const Spectrum& s);

enum class BandDirection { kKeepBelow, kKeepAbove };

/// Soft frequency-band mask over normalized bin frequency f_k = k / n_time.
struct BandMask {
  Tensor values;  // [n_bins], each in [0, 1]
  Tensor threshold;
  BandDirection direction = BandDirection::kKeepBelow;
  double temperature = 0.02;
};

/// keep-below: sigmoid((theta - f_k) / tau); keep-above: sigmoid((f_k - theta) / tau).
/// `theta` is a one-element tensor and may be trainable.
BandMask band_mask(std::size_t n_time, const Tensor& theta, BandDirection direction, double tau);
BandMask band_mask(const Spectrum& s, const Tensor& theta, BandDirection direction, double tau);

/// Scales every bin by the real mask value of its frequency.
Spectrum apply_mask(const Spectrum& s, const BandMask& m);

/// Complex elementwise product g * s (shapes must match).
Spectrum complex_multiply(const ComplexTensor& g, const Spectrum& s);

Spectrum add(const Spectrum& a, const Spectrum& b);

/// y[n] = sum_m x[m] h[(n - m) mod N].
std::vector<double> circular_convolve(std::span<const double> x, std::span<const double> h);

}  // namespace faim::spectral
