#include "tubuda/tensor.hpp"

#include <unordered_set>

#include "tubuda/error.hpp"

namespace tubuda {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) {
    if (d < 0) throw InvalidArgument("negative extent in shape " + shape_str(s));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw InvalidArgument("tensor data length " + std::to_string(data.size()) +
                          " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

int Tensor::dim(int i) const {
  const int n = ndim();
  if (i < 0) i += n;
  if (i < 0 || i >= n) throw InvalidArgument("axis out of range for shape " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(i)];
}

double Tensor::item() const {
  if (numel() != 1) throw InvalidArgument("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return from(impl_->shape, impl_->data, false); }

void Tensor::backward() const {
  if (numel() != 1) {
    throw InvalidArgument("backward() requires a scalar root, got shape " + shape_str(shape()));
  }
  if (!impl_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, std::size_t>> stack{{impl_.get(), 0}};
  visited.insert(impl_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  impl_->grad_buffer()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backward && !node->grad.empty()) {
      node->backward(*node);
      // Interior gradients are consumed; leaves keep theirs.
      if (node != impl_.get()) std::vector<double>().swap(node->grad);
    }
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> data, const std::vector<Tensor>& parents,
                   BackwardFn backward) {
  Tensor out = Tensor::from(std::move(shape), std::move(data));
  if (!g_grad_enabled) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  TensorImpl* impl = out.impl();
  impl->requires_grad = true;
  impl->parents.reserve(parents.size());
  for (const auto& p : parents) impl->parents.push_back(p.shared());
  impl->backward = std::move(backward);
  return out;
}

Tensor make_result(Shape shape, std::vector<double> data, std::initializer_list<Tensor> parents,
                   BackwardFn backward) {
  return make_result(std::move(shape), std::move(data), std::vector<Tensor>(parents),
                     std::move(backward));
}

}  // namespace tubuda
