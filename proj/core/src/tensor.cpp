#include "capsroute/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "capsroute/errors.hpp"

namespace capsroute {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d == 0) throw DimensionError("zero-sized dimension in shape " + shape_string(shape));
  }
}

}  // namespace

Tensor::Tensor() = default;

Tensor::Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

Tensor::Tensor(Shape shape, bool requires_grad) {
  check_shape(shape);
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->storage = std::make_shared<std::vector<double>>(shape_size(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  check_shape(shape);
  if (shape_size(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  impl_ = std::make_shared<detail::TensorImpl>();
  impl_->storage = std::make_shared<std::vector<double>>(std::move(values));
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  std::fill(t.data().begin(), t.data().end(), value);
  return t;
}

Tensor Tensor::from(std::initializer_list<double> values, bool requires_grad) {
  return Tensor(Shape{values.size()}, std::vector<double>(values), requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::size() const { return impl_->storage->size(); }

std::span<double> Tensor::data() { return *impl_->storage; }
std::span<const double> Tensor::data() const { return *impl_->storage; }

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_string(shape()));
  }
  return (*impl_->storage)[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }

bool Tensor::has_grad() const { return impl_->has_grad; }

std::span<const double> Tensor::grad() const {
  if (!impl_->has_grad) throw ContractError("tensor has no gradient");
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!impl_->has_grad) {
    impl_->grad.assign(size(), 0.0);
    impl_->has_grad = true;
  }
  return impl_->grad;
}

void Tensor::zero_grad() {
  impl_->grad.assign(size(), 0.0);
  impl_->has_grad = true;
}

void Tensor::clear_grad() {
  impl_->grad.clear();
  impl_->has_grad = false;
}

Tensor Tensor::view(Shape shape) const {
  check_shape(shape);
  if (shape_size(shape) != size()) {
    throw DimensionError("cannot view " + shape_string(this->shape()) + " as " +
                         shape_string(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->storage = impl_->storage;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  Tensor copy(shape(), std::vector<double>(data().begin(), data().end()), requires_grad());
  return copy;
}

bool Tensor::all_finite() const {
  return std::all_of(data().begin(), data().end(), [](double v) { return std::isfinite(v); });
}

bool Gradients::contains(const Tensor& t) const { return grads_.count(t.node()) != 0; }

std::span<const double> Gradients::of(const Tensor& t) const {
  auto it = grads_.find(t.node());
  if (it == grads_.end()) throw ContractError("no gradient recorded for tensor");
  return it->second.grad;
}

void Gradients::accumulate_into(Tensor& t, double scale) const {
  auto it = grads_.find(t.node());
  if (it == grads_.end()) return;
  auto dst = t.mutable_grad();
  const auto& src = it->second.grad;
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

bool GradientTape::needs_grad(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t && t->defined() && t->requires_grad(); });
}

void GradientTape::record(Tensor& output, std::vector<Tensor> inputs, BackwardFn fn) {
  spent_ = false;
  output.impl_->requires_grad = true;
  Node node;
  node.output = output.impl_;
  node.inputs.reserve(inputs.size());
  for (auto& in : inputs) node.inputs.push_back(in.impl_);
  node.fn = std::move(fn);
  nodes_.push_back(std::move(node));
}

void GradientTape::reset() {
  nodes_.clear();
  spent_ = false;
}

Gradients GradientTape::backward(const Tensor& loss) {
  if (spent_) {
    throw ContractError("backward called twice without a new forward pass");
  }
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
  }
  auto loss_it = std::find_if(nodes_.rbegin(), nodes_.rend(),
                              [&](const Node& n) { return n.output.get() == loss.node(); });
  if (loss_it == nodes_.rend()) {
    throw ContractError("loss was not produced through this tape");
  }

  std::unordered_set<const detail::TensorImpl*> produced;
  for (const auto& n : nodes_) produced.insert(n.output.get());

  std::unordered_map<const detail::TensorImpl*, std::vector<double>> grads;
  grads[loss.node()] = std::vector<double>{1.0};

  BackwardContext ctx;
  for (auto it = loss_it; it != nodes_.rend(); ++it) {
    auto out = grads.find(it->output.get());
    if (out == grads.end()) continue;
    ctx.grad_out = out->second;
    ctx.grad_in.clear();
    for (const auto& in : it->inputs) {
      if (!in->requires_grad) {
        ctx.grad_in.emplace_back();
        continue;
      }
      auto& g = grads[in.get()];
      if (g.empty()) g.assign(in->storage->size(), 0.0);
      ctx.grad_in.emplace_back(g);
    }
    it->fn(ctx);
  }

  Gradients result;
  for (const auto& n : nodes_) {
    for (const auto& in : n.inputs) {
      if (!in->requires_grad || produced.count(in.get())) continue;
      auto g = grads.find(in.get());
      if (g == grads.end() || result.grads_.count(in.get())) continue;
      result.grads_.emplace(in.get(), Gradients::Entry{in, std::move(g->second)});
    }
  }

  nodes_.clear();
  spent_ = true;
  return result;
}

void backward(const Tensor& loss, GradientTape& tape) {
  auto grads = tape.backward(loss);
  for (auto& [node, entry] : grads.grads_) {
    auto& impl = *entry.node;
    if (!impl.has_grad) {
      impl.grad.assign(impl.storage->size(), 0.0);
      impl.has_grad = true;
    }
    for (std::size_t i = 0; i < impl.grad.size(); ++i) impl.grad[i] += entry.grad[i];
  }
}

}  // namespace capsroute
