#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace capsroute {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class GradientTape;
class Tensor;
void backward(const Tensor& loss, GradientTape& tape);

namespace detail {
struct TensorImpl;
}

/// Dense row-major array of doubles with an optional gradient slot.
///
/// Copies are shallow: a Tensor is a handle, and copies refer to the same
/// node. Use clone() for an independent deep copy. view() returns a new
/// node that shares the underlying storage.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(std::initializer_list<double> values, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad();

  /// Metadata-only view onto the same storage; no tape involvement.
  Tensor view(Shape shape) const;
  Tensor clone() const;
  bool all_finite() const;

  bool same_node(const Tensor& other) const noexcept { return impl_ == other.impl_; }
  const detail::TensorImpl* node() const noexcept { return impl_.get(); }
  std::shared_ptr<detail::TensorImpl> shared_node() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl);
  friend class GradientTape;

  std::shared_ptr<detail::TensorImpl> impl_;
};

namespace detail {
struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<double>> storage;
  std::vector<double> grad;
  bool requires_grad = false;
  bool has_grad = false;
};
}  // namespace detail

struct BackwardContext {
  std::span<const double> grad_out;
  /// One span per recorded input; empty when that input needs no gradient.
  std::vector<std::span<double>> grad_in;
};

using BackwardFn = std::function<void(const BackwardContext&)>;

/// Gradients of leaf tensors produced by one GradientTape::backward call.
class Gradients {
 public:
  bool contains(const Tensor& t) const;
  std::span<const double> of(const Tensor& t) const;
  std::size_t size() const noexcept { return grads_.size(); }

  /// Adds the stored gradient into t's grad slot (allocating it if needed).
  void accumulate_into(Tensor& t, double scale = 1.0) const;

 private:
  friend class GradientTape;
  friend void backward(const Tensor& loss, GradientTape& tape);
  struct Entry {
    std::shared_ptr<detail::TensorImpl> node;
    std::vector<double> grad;
  };
  std::unordered_map<const detail::TensorImpl*, Entry> grads_;
};

/// Ordered record of differentiable operations.
///
/// backward() consumes the tape: it is cleared afterwards and a second
/// backward without recording a new forward pass raises ContractError.
/// A tape and the tensors it records belong to a single thread.
class GradientTape {
 public:
  explicit GradientTape(bool recording = true) : recording_(recording) {}

  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// True when an op over these inputs has to be recorded.
  bool needs_grad(std::initializer_list<const Tensor*> inputs) const;

  /// Registers output as produced from inputs; marks output as requiring grad.
  void record(Tensor& output, std::vector<Tensor> inputs, BackwardFn fn);

  Gradients backward(const Tensor& loss);
  void reset();

 private:
  struct Node {
    std::shared_ptr<detail::TensorImpl> output;
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    BackwardFn fn;
  };

  bool recording_;
  bool spent_ = false;
  std::vector<Node> nodes_;
};

/// Runs tape.backward(loss) and accumulates every leaf gradient into the
/// leaf's own grad slot. Unreachable tensors are left untouched.
void backward(const Tensor& loss, GradientTape& tape);

}  // namespace capsroute
