#include "faim/tensor.hpp"

#include <numeric>
#include <sstream>

namespace faim {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor() : impl_(std::make_shared<detail::TensorImpl>()) {}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->data.assign(numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : impl_(std::make_shared<detail::TensorImpl>()) {
  if (numel(shape) != data.size()) {
    throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

std::size_t Tensor::extent(int axis) const {
  const int r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(a)];
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  if (!impl_->is_leaf) throw ContractError("requires_grad can only be toggled on leaf tensors");
  impl_->requires_grad = on;
  return *this;
}

Tensor Tensor::grad_tensor() const {
  if (!has_grad()) return Tensor(shape(), 0.0);
  return Tensor(shape(), impl_->grad);
}

Tensor Tensor::clone() const { return Tensor(shape(), impl_->data); }

Tensor make_op_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                      BackwardFn backward) {
  auto out = std::make_shared<detail::TensorImpl>();
  out->shape = std::move(shape);
  out->data = std::move(value);
  Tape* tape = g_active_tape;
  bool needs = false;
  if (tape) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    out->requires_grad = true;
    out->is_leaf = false;
    Tape::Node node;
    node.inputs.reserve(inputs.size());
    for (const auto& in : inputs) node.inputs.push_back(in.impl());
    node.output = out;
    node.backward = std::move(backward);
    tape->record(std::move(node));
  }
  return Tensor(std::move(out));
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  loss.impl()->grad_buffer()[0] += 1.0;

  std::vector<std::vector<double>*> grad_in;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& node = *it;
    if (node.output->grad.empty()) continue;
    grad_in.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      if (node.inputs[i]->requires_grad) grad_in[i] = &node.inputs[i]->grad_buffer();
    }
    node.backward(*node.output, grad_in);
  }
  for (auto& node : nodes_) {
    for (auto& in : node.inputs) {
      if (in->is_leaf && in->requires_grad) in->grad_buffer();
    }
  }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

}  // namespace faim
