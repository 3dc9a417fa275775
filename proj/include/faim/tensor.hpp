#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace faim {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when operand shapes are incompatible with an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an API precondition that is not about shapes is violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  bool is_leaf = true;

  std::vector<double>& grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

/// Dense row-major real64 tensor. Copies share storage; use clone() for a deep
/// copy. A tensor produced while a Tape is active, from at least one input that
/// requires a gradient, is recorded on that tape.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor from(std::initializer_list<double> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  /// Extent of axis `axis`; negative values count from the back.
  std::size_t extent(int axis) const;

  std::span<const double> data() const { return impl_->data; }
  /// Direct write access. Only valid on leaves that are not mid-graph.
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const { return impl_->is_leaf; }
  bool has_grad() const { return impl_->grad.size() == impl_->data.size() && !impl_->data.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  /// Gradient as a tensor (zeros when none has been accumulated).
  Tensor grad_tensor() const;
  void zero_grad() { impl_->grad.clear(); }

  Tensor clone() const;
  Tensor detach() const { return clone(); }
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_op_result(Shape, std::vector<double>, const std::vector<Tensor>&,
                               std::function<void(const detail::TensorImpl&,
                                                  std::span<std::vector<double>*>)>);
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Complex tensor held as an explicit real/imaginary pair of equal shape.
/// There is no implicit conversion to or from Tensor.
struct ComplexTensor {
  Tensor re;
  Tensor im;

  const Shape& shape() const { return re.shape(); }
};

/// Backward rule: receives the output (value and accumulated gradient) and one
/// accumulation buffer per input (nullptr for inputs that need no gradient).
using BackwardFn =
    std::function<void(const detail::TensorImpl& out, std::span<std::vector<double>*> grad_in)>;

/// Wraps a freshly computed value as an op result, recording a tape node when a
/// tape is active and any input requires a gradient.
Tensor make_op_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                      BackwardFn backward);

/// Ordered record of primitive applications. Nodes are appended as ops run and
/// replayed in reverse by backward().
class Tape {
 public:
  struct Node {
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(Node node) { nodes_.push_back(std::move(node)); }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  /// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
  /// trainable leaf reachable on the tape; leaves with no path get zeros.
  void backward(const Tensor& loss);

 private:
  std::vector<Node> nodes_;
};

/// Makes `tape` the active tape of the calling thread for the scope lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

inline void backward(Tape& tape, const Tensor& loss) { tape.backward(loss); }

}  // namespace faim
