#include <cmath>
#include <numbers>

#include "doctest.h"
#include "faim/afb.hpp"
#include "faim/gradcheck.hpp"
#include "faim/ops.hpp"
#include "test_util.hpp"

using namespace faim;
using namespace faim::spectral;
using faim::testing::max_abs_diff;
using faim::testing::random_tensor;

namespace {

void fill(Tensor& t, double v) {
  for (double& x : t.mutable_data()) x = v;
}

// psi whose output is the constant filter re + j*im on every bin.
PsiFilter constant_psi(std::size_t dim, double re, double im) {
  Rng rng(0);
  PsiFilter p = PsiFilter::init(dim, dim, rng);
  fill(p.in.weight, 0.0);
  fill(p.in.bias, 0.0);
  fill(p.out.weight, 0.0);
  for (std::size_t d = 0; d < dim; ++d) {
    p.out.bias.mutable_data()[d] = re;
    p.out.bias.mutable_data()[dim + d] = im;
  }
  return p;
}

AfbParams random_afb(std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  return AfbParams::init(dim, dim, 0.3, 0.1, 0.05, rng);
}

}  // namespace

TEST_CASE("psi_apply examples") {
  auto s = rfft(random_tensor({2, 8, 3}, 1));
  SUBCASE("identity filter") {
    auto out = psi_apply(constant_psi(3, 1.0, 0.0), s);
    CHECK(max_abs_diff(out.bins.re.data(), s.bins.re.data()) == 0.0);
    CHECK(max_abs_diff(out.bins.im.data(), s.bins.im.data()) == 0.0);
  }
  SUBCASE("zero filter") {
    auto out = psi_apply(constant_psi(3, 0.0, 0.0), s);
    for (double v : out.bins.re.data()) CHECK(v == 0.0);
    for (double v : out.bins.im.data()) CHECK(v == 0.0);
  }
  SUBCASE("per-bin evaluation of the MLP and complex product") {
    Rng rng(5);
    auto p = PsiFilter::init(3, 4, rng);
    auto out = psi_apply(p, s);
    const auto W1 = p.in.weight.data(), b1 = p.in.bias.data(), W2 = p.out.weight.data(), b2 = p.out.bias.data();
    for (std::size_t row = 0; row < 2 * 5; ++row) {
      double in[6];
      for (std::size_t d = 0; d < 3; ++d) {
        in[d] = s.bins.re[row * 3 + d];
        in[3 + d] = s.bins.im[row * 3 + d];
      }
      double hid[4];
      for (std::size_t j = 0; j < 4; ++j) {
        double acc = b1[j];
        for (std::size_t i = 0; i < 6; ++i) acc += in[i] * W1[i * 4 + j];
        hid[j] = acc > 0 ? acc : 0.0;
      }
      for (std::size_t d = 0; d < 3; ++d) {
        double gr = b2[d], gi = b2[3 + d];
        for (std::size_t j = 0; j < 4; ++j) {
          gr += hid[j] * W2[j * 6 + d];
          gi += hid[j] * W2[j * 6 + 3 + d];
        }
        const std::complex<double> expect = std::complex<double>(gr, gi) * std::complex<double>(in[d], in[3 + d]);
        CHECK(out.bins.re[row * 3 + d] == doctest::Approx(expect.real()).epsilon(1e-12));
        CHECK(out.bins.im[row * 3 + d] == doctest::Approx(expect.imag()).epsilon(1e-12));
      }
    }
  }
  SUBCASE("width mismatch") {
    Rng rng(1);
    CHECK_THROWS_AS(psi_apply(PsiFilter::init(2, 4, rng), s), ShapeError);
  }
}

TEST_CASE("afb_forward with identity global filter and silent local filters is the identity") {
  auto p = random_afb(4, 2);
  p.psi_global = constant_psi(4, 1.0, 0.0);
  p.psi_high_local = constant_psi(4, 0.0, 0.0);
  p.psi_low_local = constant_psi(4, 0.0, 0.0);
  for (std::size_t z : {1u, 5u, 8u, 16u}) {
    auto x = random_tensor({3, z, 4}, z);
    auto r = afb_forward(x, p);
    CHECK(r.output.shape() == x.shape());
    CHECK(max_abs_diff(r.output.data(), x.data()) < 1e-12);
  }
}

TEST_CASE("high-band branch keeps a low-frequency sinusoid") {
  const std::size_t z = 16;
  std::vector<double> v(z);
  for (std::size_t t = 0; t < z; ++t) v[t] = std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / 16.0 + 0.3);
  Tensor x(Shape{z, 1}, v);
  auto p = random_afb(1, 3);
  p.theta_high.mutable_data()[0] = 0.1;  // keeps bins 0 and 1 (f = 0.0625)
  p.tau = 1e-3;
  p.psi_global = constant_psi(1, 0.0, 0.0);
  p.psi_high_local = constant_psi(1, 1.0, 0.0);
  p.psi_low_local = constant_psi(1, 0.0, 0.0);
  auto r = afb_forward(x, p);
  // The only energy sits in bin 1 (mask sigmoid(37.5)); bin 2 gets sigmoid(-25).
  CHECK(r.activations.high_mask->values[1] > 1.0 - 1e-15);
  CHECK(r.activations.high_mask->values[2] < 2e-11);
  CHECK(max_abs_diff(r.output.data(), v) < 1e-12);
}

TEST_CASE("afb_forward equals its sub-operations composed by hand") {
  auto p = random_afb(4, 4);
  auto x = random_tensor({8, 4}, 5);
  auto r = afb_forward(x, p);
  const auto f = rfft(x);
  const auto high = apply_mask(f, band_mask(f, p.theta_high, BandDirection::kKeepBelow, p.tau));
  const auto low = apply_mask(f, band_mask(f, p.theta_low, BandDirection::kKeepAbove, p.tau));
  const auto g = psi_apply(p.psi_global, f);
  const auto lh = psi_apply(p.psi_high_local, high);
  const auto ll = psi_apply(p.psi_low_local, low);
  std::vector<double> re(g.bins.re.size()), im(re.size());
  for (std::size_t i = 0; i < re.size(); ++i) {
    re[i] = g.bins.re[i] + lh.bins.re[i] + ll.bins.re[i];
    im[i] = g.bins.im[i] + lh.bins.im[i] + ll.bins.im[i];
  }
  const auto expected = irfft(Spectrum{{Tensor(g.bins.re.shape(), re), Tensor(g.bins.im.shape(), im)}, 8});
  CHECK(max_abs_diff(r.output.data(), expected.data()) < 1e-13);
  CHECK(max_abs_diff(r.activations.integrated.bins.re.data(), re) < 1e-13);
}

TEST_CASE("literal cross-pairing multiplies the high-band filter into the low band") {
  auto p = random_afb(2, 6);
  auto x = random_tensor({10, 2}, 7);
  AfbOptions lit;
  lit.literal_eq10 = true;
  auto r = afb_forward(x, p, lit);
  const auto gh = psi_filter(p.psi_high_local, *r.activations.high_band);
  const auto expect = complex_multiply(gh, *r.activations.low_band);
  CHECK(max_abs_diff(r.activations.local_high->bins.re.data(), expect.bins.re.data()) == 0.0);
}

TEST_CASE("ablation switches drop branches") {
  auto p = random_afb(2, 8);
  auto x = random_tensor({10, 2}, 9);
  AfbOptions global_only{false, false, false};
  auto r = afb_forward(x, p, global_only);
  CHECK_FALSE(r.activations.local_high.has_value());
  CHECK_FALSE(r.activations.local_low.has_value());
  CHECK(max_abs_diff(r.output.data(), irfft(psi_apply(p.psi_global, rfft(x))).data()) < 1e-13);
}

TEST_CASE("output shape always equals input shape") {
  auto p = random_afb(3, 10);
  for (std::size_t z = 1; z <= 17; ++z) {
    auto x = random_tensor({2, z, 3}, 100 + z);
    CHECK(afb_forward(x, p).output.shape() == x.shape());
  }
}

TEST_CASE("all-pass masks with tied weights make the three branches equal") {
  auto p = random_afb(3, 11);
  p.theta_high.mutable_data()[0] = 10.0;
  p.theta_low.mutable_data()[0] = -10.0;
  p.tau = 1e-3;
  p.psi_high_local = p.psi_global;
  p.psi_low_local = p.psi_global;
  auto r = afb_forward(random_tensor({2, 12, 3}, 12), p);
  CHECK(max_abs_diff(r.activations.local_high->bins.re.data(), r.activations.global.bins.re.data()) == 0.0);
  CHECK(max_abs_diff(r.activations.local_low->bins.im.data(), r.activations.global.bins.im.data()) == 0.0);
}

TEST_CASE("each psi branch acts as circular convolution with irfft(g)") {
  Rng rng(13);
  for (std::size_t n = 1; n <= 16; ++n) {
    auto p = PsiFilter::init(1, 3, rng);
    auto x = random_tensor({n, 1}, 200 + n);
    const auto f = rfft(x);
    const ComplexTensor g = psi_filter(p, f);
    const auto y = irfft(complex_multiply(g, f));
    const auto h = irfft(Spectrum{g, n});
    const auto ref = circular_convolve(x.data(), h.data());
    CHECK(max_abs_diff(y.data(), ref) < 1e-10);
  }
}

TEST_CASE("afb_forward is differentiable end to end, thresholds included") {
  auto p = random_afb(2, 14);
  p.theta_high.mutable_data()[0] = 0.27;  // keep both thresholds off bin frequencies
  p.theta_low.mutable_data()[0] = 0.09;
  auto x = random_tensor({2, 8, 2}, 15);
  auto probe = random_tensor({2, 8, 2}, 16);
  NamedTensors named;
  p.collect("afb", named);
  std::vector<Tensor> params{x};
  for (auto& [name, t] : named) params.push_back(t);
  auto res = finite_diff_check([&] { return ops::sum(ops::mul(afb_forward(x, p).output, probe)); }, params, 1e-5);
  CAPTURE(res.worst_param);
  CAPTURE(res.analytic_at_worst);
  CAPTURE(res.numeric_at_worst);
  CHECK(res.max_rel_error < 1e-4);
  // The threshold gradients are genuinely non-zero.
  x.set_requires_grad();
  Tape tape;
  {
    TapeScope scope(tape);
    tape.backward(ops::sum(ops::mul(afb_forward(x, p).output, probe)));
  }
  CHECK(std::abs(p.theta_high.grad()[0]) > 1e-6);
  CHECK(std::abs(p.theta_low.grad()[0]) > 1e-6);
}
