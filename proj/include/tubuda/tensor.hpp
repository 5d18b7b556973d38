#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tubuda {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorImpl;

/// Gradient callback of a graph node. It reads the node's own `grad` and
/// accumulates into the grads of its parents.
using BackwardFn = std::function<void(TensorImpl& self)>;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward;

  /// Lazily zero-initialised gradient buffer.
  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

/// Shared handle to a dense row-major tensor that may take part in a
/// reverse-mode differentiation graph. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int dim(int i) const;
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> data() { return impl_->data; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient view; zero-filled if nothing has been accumulated yet.
  std::span<const double> grad() const { return impl_->grad_buffer(); }
  std::span<double> grad() { return impl_->grad_buffer(); }
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Throws InvalidArgument for
  /// non-scalar roots.
  void backward() const;

  /// Copy of the values with no graph attached.
  Tensor detach() const;

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Disables graph construction on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Builds an op result. The node records `parents` and `backward` only if
/// graph construction is enabled and some parent requires a gradient.
Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> parents,
                   BackwardFn backward);
Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& parents,
                   BackwardFn backward);

}  // namespace tubuda
