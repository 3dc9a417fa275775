#include "faim/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace faim::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

std::size_t norm_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(a);
}

// Index maps from a broadcast output position to each operand position.
struct Broadcast {
  enum class Kind { kSame, kScalarB, kScalarA, kSuffixB, kSuffixA, kGeneral } kind = Kind::kSame;
  Shape out;
  std::vector<std::size_t> ia, ib;  // only filled for kGeneral
};

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

Broadcast plan_broadcast(const Shape& a, const Shape& b) {
  Broadcast plan;
  if (a == b) {
    plan.out = a;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    plan.out[i] = std::max(da, db);
  }
  const std::size_t na = numel(a), nb = numel(b), no = numel(plan.out);
  if (nb == 1 && na == no) {
    plan.kind = Broadcast::Kind::kScalarB;
  } else if (na == 1 && nb == no) {
    plan.kind = Broadcast::Kind::kScalarA;
  } else if (na == no && is_suffix(b, a)) {
    plan.kind = Broadcast::Kind::kSuffixB;
  } else if (nb == no && is_suffix(a, b)) {
    plan.kind = Broadcast::Kind::kSuffixA;
  } else {
    plan.kind = Broadcast::Kind::kGeneral;
    auto strides_for = [&](const Shape& s) {
      std::vector<std::size_t> st(rank, 0);
      std::size_t acc = 1;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const std::size_t axis = s.size() - 1 - i;
        const std::size_t out_axis = rank - 1 - i;
        st[out_axis] = s[axis] == 1 ? 0 : acc;
        acc *= s[axis];
      }
      return st;
    };
    const auto sa = strides_for(a), sb = strides_for(b);
    plan.ia.resize(no);
    plan.ib.resize(no);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t pa = 0, pb = 0;
    for (std::size_t i = 0; i < no; ++i) {
      plan.ia[i] = pa;
      plan.ib[i] = pb;
      for (std::size_t ax = rank; ax-- > 0;) {
        ++idx[ax];
        pa += sa[ax];
        pb += sb[ax];
        if (idx[ax] < plan.out[ax]) break;
        pa -= sa[ax] * idx[ax];
        pb -= sb[ax] * idx[ax];
        idx[ax] = 0;
      }
    }
  }
  return plan;
}

template <typename Fn>
void for_each_pair(const Broadcast& plan, std::size_t na, std::size_t nb, Fn&& fn) {
  const std::size_t no = numel(plan.out);
  switch (plan.kind) {
    case Broadcast::Kind::kSame:
      for (std::size_t i = 0; i < no; ++i) fn(i, i, i);
      break;
    case Broadcast::Kind::kScalarB:
      for (std::size_t i = 0; i < no; ++i) fn(i, i, 0);
      break;
    case Broadcast::Kind::kScalarA:
      for (std::size_t i = 0; i < no; ++i) fn(i, 0, i);
      break;
    case Broadcast::Kind::kSuffixB:
      for (std::size_t base = 0; base < no; base += nb)
        for (std::size_t j = 0; j < nb; ++j) fn(base + j, base + j, j);
      break;
    case Broadcast::Kind::kSuffixA:
      for (std::size_t base = 0; base < no; base += na)
        for (std::size_t j = 0; j < na; ++j) fn(base + j, j, base + j);
      break;
    case Broadcast::Kind::kGeneral:
      for (std::size_t i = 0; i < no; ++i) fn(i, plan.ia[i], plan.ib[i]);
      break;
  }
}

// Fwd(a, b) -> value; Grad(a, b) -> {d/da, d/db}.
template <typename Fwd, typename Grad>
Tensor binary(const Tensor& a, const Tensor& b, Fwd fwd, Grad grad) {
  auto plan = std::make_shared<Broadcast>(plan_broadcast(a.shape(), b.shape()));
  const auto da = a.data();
  const auto db = b.data();
  const std::size_t na = a.size(), nb = b.size();
  std::vector<double> out(numel(plan->out));
  for_each_pair(*plan, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = fwd(da[ia], db[ib]); });
  const auto* pa = a.impl().get();
  const auto* pb = b.impl().get();
  return make_op_result(plan->out, std::move(out), {a, b},
                        [plan, pa, pb, na, nb, grad](const detail::TensorImpl& y, std::span<std::vector<double>*> gin) {
                          std::vector<double>* ga = gin[0];
                          std::vector<double>* gb = gin[1];
                          const auto& g = y.grad;
                          for_each_pair(*plan, na, nb, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                            const auto [dfa, dfb] = grad(pa->data[ia], pb->data[ib]);
                            if (ga) (*ga)[ia] += g[i] * dfa;
                            if (gb) (*gb)[ib] += g[i] * dfb;
                          });
                        });
}

// Fwd(x) -> y; Deriv(x, y) -> dy/dx.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto dx = x.data();
  std::vector<double> out(dx.size());
  for (std::size_t i = 0; i < dx.size(); ++i) out[i] = fwd(dx[i]);
  const auto* px = x.impl().get();
  return make_op_result(x.shape(), std::move(out), {x},
                        [px, deriv](const detail::TensorImpl& y, std::span<std::vector<double>*> gin) {
                          auto& gx = *gin[0];
                          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += y.grad[i] * deriv(px->data[i], y.data[i]);
                        });
}

struct Pair {
  double a, b;
};

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Splits a shape around `axis` into (outer, extent, inner) element counts.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x + y; }, [](double, double) { return Pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x - y; }, [](double, double) { return Pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, [](double x, double y) { return x * y; }, [](double x, double y) { return Pair{y, x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      a, b, [](double x, double y) { return x / y; }, [](double x, double y) { return Pair{1.0 / y, -x / (y * y)}; });
}

Tensor neg(const Tensor& x) {
  return unary(x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& x, double c) {
  return unary(x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sin(const Tensor& x) {
  return unary(x, [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0 ? v : 0.0; }, [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, [](double v) { return v * sigmoid_scalar(v); },
      [](double v, double) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
      [](double v, double) { return sigmoid_scalar(v); });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return make_op_result(Shape{1}, {s}, {x}, [](const detail::TensorImpl& y, std::span<std::vector<double>*> gin) {
    for (double& g : *gin[0]) g += y.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum_axis(const Tensor& x, int axis) {
  const std::size_t ax = norm_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(ax));
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto d = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.n; ++k)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += d[(o * s.n + k) * s.inner + i];
  return make_op_result(out_shape, std::move(out), {x}, [s](const detail::TensorImpl& y, std::span<std::vector<double>*> gin) {
    auto& gx = *gin[0];
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.n; ++k)
        for (std::size_t i = 0; i < s.inner; ++i) gx[(o * s.n + k) * s.inner + i] += y.grad[o * s.inner + i];
  });
}

Tensor mean_axis(const Tensor& x, int axis) {
  const std::size_t n = x.extent(axis);
  if (n == 0) throw ShapeError("mean over empty axis");
  return scale(sum_axis(x, axis), 1.0 / static_cast<double>(n));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op_result(std::move(shape), std::move(out), {x}, [](const detail::TensorImpl& y, std::span<std::vector<double>*> gin) {
    auto& gx = *gin[0];
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += y.grad[i];
  });
}

Tensor narrow(const Tensor& x, int axis, std::size_t start, std::size_t len) {
  const std::size_t ax = norm_axis(axis, x.rank());
  const AxisSplit s = split_at(x.shape(), ax);
  if (start + len > s.n) {
    throw ShapeError("narrow [" + std::to_string(start) + ", " + std::to_string(start + len) + ") exceeds extent " +
                     std::to_string(s.n));
  }
  Shape out_shape = x.shape();
  out_shape[ax] = len;
  std::vector<double> out(s.outer * len * s.inner);
  const auto d = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(d.begin() + static_cast<std::ptrdiff_t>((o * s.n + start) * s.inner), len * s.inner,
                out.begin() + static_cast<std::ptrdiff_t>(o * len * s.inner));
  return make_op_result(out_shape, std::move(out), {x},
                        [s, start, len](const detail::TensorImpl& y, std::span<std::vector<double>*> gin) {
                          auto& gx = *gin[0];
                          for (std::size_t o = 0; o < s.outer; ++o)
                            for (std::size_t j = 0; j < len * s.inner; ++j)
                              gx[(o * s.n + start) * s.inner + j] += y.grad[o * len * s.inner + j];
                        });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const std::size_t ax = norm_axis(axis, parts[0].rank());
  Shape out_shape = parts[0].shape();
  out_shape[ax] = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != out_shape.size()) throw ShapeError("concat rank mismatch");
    widths.push_back(probe[ax]);
    probe[ax] = 0;
    if (probe != out_shape) throw ShapeError("concat shape mismatch: " + shape_str(p.shape()));
  }
  for (std::size_t w : widths) out_shape[ax] += w;
  const AxisSplit s = split_at(out_shape, ax);
  std::vector<double> out(numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto d = parts[p].data();
    const std::size_t w = widths[p] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(o * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(o * s.n * s.inner + offset));
    offset += w;
  }
  return make_op_result(out_shape, std::move(out), parts,
                        [s, widths](const detail::TensorImpl& y, std::span<std::vector<double>*> gin) {
                          std::size_t offset = 0;
                          for (std::size_t p = 0; p < widths.size(); ++p) {
                            const std::size_t w = widths[p] * s.inner;
                            if (gin[p]) {
                              auto& gp = *gin[p];
                              for (std::size_t o = 0; o < s.outer; ++o)
                                for (std::size_t j = 0; j < w; ++j) gp[o * w + j] += y.grad[o * s.n * s.inner + offset + j];
                            }
                            offset += w;
                          }
                        });
}

Tensor matmul(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2) throw ShapeError("matmul weight must be rank 2, got " + shape_str(w.shape()));
  if (x.rank() < 1 || x.extent(-1) != w.extent(0)) {
    throw ShapeError("matmul " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
  }
  const auto in = static_cast<Eigen::Index>(w.extent(0));
  const auto out_dim = static_cast<Eigen::Index>(w.extent(1));
  const auto rows = static_cast<Eigen::Index>(x.size() / w.extent(0));
  Shape out_shape = x.shape();
  out_shape.back() = w.extent(1);
  std::vector<double> out(static_cast<std::size_t>(rows * out_dim));
  MutMap(out.data(), rows, out_dim).noalias() = ConstMap(x.data().data(), rows, in) * ConstMap(w.data().data(), in, out_dim);
  const auto* px = x.impl().get();
  const auto* pw = w.impl().get();
  return make_op_result(out_shape, std::move(out), {x, w},
                        [px, pw, rows, in, out_dim](const detail::TensorImpl& y, std::span<std::vector<double>*> gin) {
                          ConstMap g(y.grad.data(), rows, out_dim);
                          if (gin[0]) MutMap(gin[0]->data(), rows, in).noalias() += g * ConstMap(pw->data.data(), in, out_dim).transpose();
                          if (gin[1]) MutMap(gin[1]->data(), in, out_dim).noalias() += ConstMap(px->data.data(), rows, in).transpose() * g;
                        });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) { return add(matmul(x, w), bias); }

Tensor causal_conv1d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.rank() < 2) throw ShapeError("causal_conv1d expects [..., tokens, dim], got " + shape_str(x.shape()));
  if (kernel.rank() != 2 || kernel.extent(0) < 1) throw ShapeError("causal_conv1d kernel must be [k>=1, dim]");
  const std::size_t tokens = x.extent(-2), dim = x.extent(-1), k = kernel.extent(0);
  if (kernel.extent(1) != dim || bias.size() != dim) {
    throw ShapeError("causal_conv1d kernel " + shape_str(kernel.shape()) + " / bias " + shape_str(bias.shape()) +
                     " do not match input dim " + std::to_string(dim));
  }
  const std::size_t outer = x.size() / (tokens * dim);
  const auto xd = x.data(), kd = kernel.data(), bd = bias.data();
  std::vector<double> out(x.size());
  for (std::size_t o = 0; o < outer; ++o) {
    const double* xs = xd.data() + o * tokens * dim;
    double* ys = out.data() + o * tokens * dim;
    for (std::size_t t = 0; t < tokens; ++t) {
      double* yt = ys + t * dim;
      for (std::size_t d = 0; d < dim; ++d) yt[d] = bd[d];
      for (std::size_t j = 0; j < k; ++j) {
        if (t + j + 1 < k) continue;
        const double* xt = xs + (t + j + 1 - k) * dim;
        const double* kj = kd.data() + j * dim;
        for (std::size_t d = 0; d < dim; ++d) yt[d] += kj[d] * xt[d];
      }
    }
  }
  const auto* px = x.impl().get();
  const auto* pk = kernel.impl().get();
  return make_op_result(x.shape(), std::move(out), {x, kernel, bias},
                        [px, pk, outer, tokens, dim, k](const detail::TensorImpl& y, std::span<std::vector<double>*> gin) {
                          for (std::size_t o = 0; o < outer; ++o) {
                            const std::size_t base = o * tokens * dim;
                            for (std::size_t t = 0; t < tokens; ++t) {
                              const double* gt = y.grad.data() + base + t * dim;
                              if (gin[2])
                                for (std::size_t d = 0; d < dim; ++d) (*gin[2])[d] += gt[d];
                              for (std::size_t j = 0; j < k; ++j) {
                                if (t + j + 1 < k) continue;
                                const std::size_t src = base + (t + j + 1 - k) * dim;
                                for (std::size_t d = 0; d < dim; ++d) {
                                  if (gin[0]) (*gin[0])[src + d] += pk->data[j * dim + d] * gt[d];
                                  if (gin[1]) (*gin[1])[j * dim + d] += px->data[src + d] * gt[d];
                                }
                              }
                            }
                          }
                        });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (eps <= 0) throw ContractError("layer_norm eps must be positive");
  const std::size_t dim = x.extent(-1);
  if (dim == 0) throw ShapeError("layer_norm over empty axis");
  if (gamma.size() != dim || beta.size() != dim) throw ShapeError("layer_norm gamma/beta must have extent " + std::to_string(dim));
  const std::size_t rows = x.size() / dim;
  const auto xd = x.data(), gd = gamma.data(), bd = beta.data();
  std::vector<double> out(x.size());
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * dim;
    double mu = 0.0;
    for (std::size_t d = 0; d < dim; ++d) mu += xr[d];
    mu /= static_cast<double>(dim);
    double var = 0.0;
    for (std::size_t d = 0; d < dim; ++d) var += (xr[d] - mu) * (xr[d] - mu);
    var /= static_cast<double>(dim);
    const double rs = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t d = 0; d < dim; ++d) {
      const double h = (xr[d] - mu) * rs;
      (*xhat)[r * dim + d] = h;
      out[r * dim + d] = h * gd[d] + bd[d];
    }
  }
  const auto* pg = gamma.impl().get();
  return make_op_result(x.shape(), std::move(out), {x, gamma, beta},
                        [pg, xhat, rstd, rows, dim](const detail::TensorImpl& y, std::span<std::vector<double>*> gin) {
                          const double inv_n = 1.0 / static_cast<double>(dim);
                          for (std::size_t r = 0; r < rows; ++r) {
                            const double* g = y.grad.data() + r * dim;
                            const double* h = xhat->data() + r * dim;
                            if (gin[1])
                              for (std::size_t d = 0; d < dim; ++d) (*gin[1])[d] += g[d] * h[d];
                            if (gin[2])
                              for (std::size_t d = 0; d < dim; ++d) (*gin[2])[d] += g[d];
                            if (!gin[0]) continue;
                            double mean_gh = 0.0, mean_ghh = 0.0;
                            for (std::size_t d = 0; d < dim; ++d) {
                              const double gh = g[d] * pg->data[d];
                              mean_gh += gh;
                              mean_ghh += gh * h[d];
                            }
                            mean_gh *= inv_n;
                            mean_ghh *= inv_n;
                            for (std::size_t d = 0; d < dim; ++d) {
                              const double gh = g[d] * pg->data[d];
                              (*gin[0])[r * dim + d] += (*rstd)[r] * (gh - mean_gh - h[d] * mean_ghh);
                            }
                          }
                        });
}

Tensor log_softmax(const Tensor& x) {
  const std::size_t k = x.extent(-1);
  const std::size_t rows = x.size() / k;
  const auto xd = x.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xd.data() + r * k;
    const double mx = *std::max_element(xr, xr + k);
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += std::exp(xr[i] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t i = 0; i < k; ++i) out[r * k + i] = xr[i] - lse;
  }
  return make_op_result(x.shape(), std::move(out), {x}, [rows, k](const detail::TensorImpl& y, std::span<std::vector<double>*> gin) {
    for (std::size_t r = 0; r < rows; ++r) {
      double gs = 0.0;
      for (std::size_t i = 0; i < k; ++i) gs += y.grad[r * k + i];
      for (std::size_t i = 0; i < k; ++i) (*gin[0])[r * k + i] += y.grad[r * k + i] - std::exp(y.data[r * k + i]) * gs;
    }
  });
}

}  // namespace faim::ops
