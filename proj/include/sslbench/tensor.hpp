#pragma once

// Dense row-major double tensors with tape-free reverse-mode autodiff: every
// op result keeps a node pointing at its inputs and a closure that pushes the
// output gradient back into them.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sslbench {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;
struct TensorImpl;

struct GradNode {
  std::vector<Tensor> inputs;
  // Receives the finished output (value and gradient) and accumulates into
  // the gradients of `inputs`.
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<GradNode> node;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int axis) const;
  std::int64_t numel() const { return static_cast<std::int64_t>(impl_->data.size()); }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::span<double> values() { return impl_->data; }
  std::span<const double> values() const { return impl_->data; }
  double item() const;
  double at(std::int64_t i) const { return impl_->data[static_cast<std::size_t>(i)]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  bool has_grad() const { return !impl_->grad.empty(); }
  // Gradient storage, allocated (zeroed) on first access.
  std::vector<double>& grad();
  const std::vector<double>& grad() const { return impl_->grad; }
  void zero_grad();

  // Reverse-mode sweep from a scalar root.
  void backward();

  // Copy of the values as a fresh leaf that carries no graph.
  Tensor detach() const;
  // Deep copy without graph.
  Tensor clone() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Builds an op result. A graph node is attached only when grad mode is on
// and at least one input requires a gradient.
Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                   std::function<void(const TensorImpl& out)> backward);

// Gradient buffer of an op input, or nullptr when it does not need one.
double* grad_target(const Tensor& t);

}  // namespace sslbench
