#include "faim/spectral.hpp"

#include <cmath>
#include <numbers>

#include "faim/ops.hpp"

namespace faim::spectral {

namespace {

void fft_radix2(std::vector<cplx>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        // Twiddles are evaluated directly rather than by recurrence to keep
        // rounding error at the level of the direct sum.
        const cplx w(std::cos(ang * static_cast<double>(k)), std::sin(ang * static_cast<double>(k)));
        const cplx u = a[i + k];
        const cplx v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

std::vector<cplx> direct_dft(std::span<const cplx> x, bool inverse) {
  const std::size_t n = x.size();
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<cplx> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    cplx acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      // Reduce k*t mod n first so the angle stays in [0, 2 pi).
      const double ang = sign * 2.0 * std::numbers::pi * static_cast<double>((k * t) % n) / static_cast<double>(n);
      acc += x[t] * cplx(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

struct Layout {
  std::size_t outer, n, dim;
};

Layout token_layout(const Shape& shape) {
  if (shape.size() < 2) throw ShapeError("spectral ops expect [..., tokens, dim], got " + shape_str(shape));
  Layout l{1, shape[shape.size() - 2], shape.back()};
  for (std::size_t i = 0; i + 2 < shape.size(); ++i) l.outer *= shape[i];
  return l;
}

// Forward half-spectrum of every column of a real [outer, n, dim] buffer.
void rfft_columns(const double* x, Layout l, std::size_t n_bins, double* re, double* im) {
  std::vector<cplx> col(l.n);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t d = 0; d < l.dim; ++d) {
      for (std::size_t t = 0; t < l.n; ++t) col[t] = x[(o * l.n + t) * l.dim + d];
      const auto spec = dft(col, false);
      for (std::size_t k = 0; k < n_bins; ++k) {
        re[(o * n_bins + k) * l.dim + d] = spec[k].real();
        im[(o * n_bins + k) * l.dim + d] = spec[k].imag();
      }
    }
  }
}

// out[n] += scale * Re( sum_{k < n_bins} (c_k * G[k]) e^{+j 2 pi k n / N} ) per column,
// with G = re + j im and c_k = weights[k].
void accumulate_half_inverse(const double* re, const double* im, Layout l, std::size_t n_bins,
                             const std::vector<double>& weights, double scale, double* out) {
  std::vector<cplx> col(l.n);
  for (std::size_t o = 0; o < l.outer; ++o) {
    for (std::size_t d = 0; d < l.dim; ++d) {
      std::fill(col.begin(), col.end(), cplx(0.0));
      for (std::size_t k = 0; k < n_bins; ++k) {
        const std::size_t idx = (o * n_bins + k) * l.dim + d;
        col[k] = weights[k] * cplx(re ? re[idx] : 0.0, im ? im[idx] : 0.0);
      }
      const auto time = dft(col, true);
      for (std::size_t t = 0; t < l.n; ++t) out[(o * l.n + t) * l.dim + d] += scale * time[t].real();
    }
  }
}

// Bins other than DC and Nyquist stand for a conjugate pair in the full spectrum.
std::vector<double> hermitian_weights(std::size_t n_time, std::size_t n_bins) {
  std::vector<double> w(n_bins, 2.0);
  w[0] = 1.0;
  if (n_time % 2 == 0 && n_bins > 1) w[n_bins - 1] = 1.0;
  return w;
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::vector<cplx> dft(std::span<const cplx> x, bool inverse) {
  if (is_power_of_two(x.size())) {
    std::vector<cplx> a(x.begin(), x.end());
    fft_radix2(a, inverse);
    return a;
  }
  return direct_dft(x, inverse);
}

Spectrum rfft(const Tensor& x) {
  const Layout l = token_layout(x.shape());
  if (l.n < 1) throw ShapeError("rfft requires at least one token");
  const std::size_t n_bins = l.n / 2 + 1;
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = n_bins;
  std::vector<double> re(numel(out_shape)), im(numel(out_shape));
  rfft_columns(x.data().data(), l, n_bins, re.data(), im.data());

  const std::vector<double> ones(n_bins, 1.0);
  Spectrum s;
  s.n_time = l.n;
  s.bins.re = make_op_result(out_shape, std::move(re), {x},
                             [l, n_bins, ones](const detail::TensorImpl& y, std::span<std::vector<double>*> gin) {
                               accumulate_half_inverse(y.grad.data(), nullptr, l, n_bins, ones, 1.0, gin[0]->data());
                             });
  s.bins.im = make_op_result(out_shape, std::move(im), {x},
                             [l, n_bins, ones](const detail::TensorImpl& y, std::span<std::vector<double>*> gin) {
                               // d Im X[k] / d x[n] = -sin(2 pi k n / N) = Re(j e^{j 2 pi k n / N}).
                               accumulate_half_inverse(nullptr, y.grad.data(), l, n_bins, ones, 1.0, gin[0]->data());
                             });
  return s;
}

Tensor irfft(const Spectrum& s) {
  if (s.bins.re.shape() != s.bins.im.shape()) throw ShapeError("spectrum real/imaginary shapes differ");
  const std::size_t n_bins = s.bins.re.extent(-2);
  if (s.n_time == 0 || n_bins != s.n_time / 2 + 1) {
    throw ShapeError("spectrum has " + std::to_string(n_bins) + " bins, inconsistent with n_time " + std::to_string(s.n_time));
  }
  Layout bins_layout = token_layout(s.bins.re.shape());
  Layout l{bins_layout.outer, s.n_time, bins_layout.dim};
  Shape out_shape = s.bins.re.shape();
  out_shape[out_shape.size() - 2] = s.n_time;
  std::vector<double> out(numel(out_shape), 0.0);
  const auto weights = hermitian_weights(s.n_time, n_bins);
  const double inv_n = 1.0 / static_cast<double>(s.n_time);
  accumulate_half_inverse(s.bins.re.data().data(), s.bins.im.data().data(), l, n_bins, weights, inv_n, out.data());

  return make_op_result(out_shape, std::move(out), {s.bins.re, s.bins.im},
                        [l, n_bins, weights, inv_n](const detail::TensorImpl& y, std::span<std::vector<double>*> gin) {
                          // dx[n]/dRe X[k] = c_k/N cos(theta), dx[n]/dIm X[k] = -c_k/N sin(theta):
                          // both are c_k/N times the forward transform of the output gradient.
                          std::vector<double> gre(l.outer * n_bins * l.dim), gim(gre.size());
                          rfft_columns(y.grad.data(), l, n_bins, gre.data(), gim.data());
                          for (std::size_t i = 0; i < gre.size(); ++i) {
                            const std::size_t k = (i / l.dim) % n_bins;
                            const double w = weights[k] * inv_n;
                            if (gin[0]) (*gin[0])[i] += w * gre[i];
                            if (gin[1]) (*gin[1])[i] += w * gim[i];
                          }
                        });
}

BandMask band_mask(std::size_t n_time, const Tensor& theta, BandDirection direction, double tau) {
  if (tau <= 0) throw ContractError("band_mask temperature must be positive");
  if (n_time == 0) throw ContractError("band_mask needs n_time >= 1");
  if (theta.size() != 1) throw ShapeError("band_mask threshold must be a single value");
  const std::size_t n_bins = n_time / 2 + 1;
  std::vector<double> freqs(n_bins);
  for (std::size_t k = 0; k < n_bins; ++k) freqs[k] = static_cast<double>(k) / static_cast<double>(n_time);
  const Tensor f(Shape{n_bins}, std::move(freqs));
  const Tensor theta_flat = theta.rank() == 1 ? theta : ops::reshape(theta, Shape{1});
  const Tensor logits = direction == BandDirection::kKeepBelow ? ops::sub(theta_flat, f) : ops::sub(f, theta_flat);
  return BandMask{ops::sigmoid(ops::scale(logits, 1.0 / tau)), theta, direction, tau};
}

BandMask band_mask(const Spectrum& s, const Tensor& theta, BandDirection direction, double tau) {
  return band_mask(s.n_time, theta, direction, tau);
}

Spectrum apply_mask(const Spectrum& s, const BandMask& m) {
  const std::size_t n_bins = s.n_bins();
  if (m.values.size() != n_bins) {
    throw ShapeError("mask has " + std::to_string(m.values.size()) + " values for " + std::to_string(n_bins) + " bins");
  }
  const Tensor column = ops::reshape(m.values, Shape{n_bins, 1});
  return Spectrum{{ops::mul(s.bins.re, column), ops::mul(s.bins.im, column)}, s.n_time};
}

Spectrum complex_multiply(const ComplexTensor& g, const Spectrum& s) {
  if (g.re.shape() != s.bins.re.shape()) {
    throw ShapeError("filter " + shape_str(g.re.shape()) + " does not match spectrum " + shape_str(s.bins.re.shape()));
  }
  Tensor re = ops::sub(ops::mul(g.re, s.bins.re), ops::mul(g.im, s.bins.im));
  Tensor im = ops::add(ops::mul(g.re, s.bins.im), ops::mul(g.im, s.bins.re));
  return Spectrum{{std::move(re), std::move(im)}, s.n_time};
}

Spectrum add(const Spectrum& a, const Spectrum& b) {
  if (a.n_time != b.n_time) throw ShapeError("adding spectra of different n_time");
  return Spectrum{{ops::add(a.bins.re, b.bins.re), ops::add(a.bins.im, b.bins.im)}, a.n_time};
}

std::vector<double> circular_convolve(std::span<const double> x, std::span<const double> h) {
  if (x.size() != h.size()) {
    throw ShapeError("circular_convolve length mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(h.size()));
  }
  const std::size_t n = x.size();
  std::vector<double> y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < n; ++m) y[i] += x[m] * h[(i + n - m) % n];
  return y;
}

}  // namespace faim::spectral
