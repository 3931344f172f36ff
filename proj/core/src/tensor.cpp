#include "abcm/tensor.hpp"

#include <algorithm>
#include <unordered_set>

namespace abcm {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

namespace {

thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::TensorImpl> new_leaf(Shape shape, std::vector<float> values,
                                             bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  impl->requires_grad = requires_grad;
  impl->leaf = true;
  return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return wrap(new_leaf(std::move(shape), std::vector<float>(n, 0.0f), requires_grad));
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  auto n = shape_numel(shape);
  return wrap(new_leaf(std::move(shape), std::vector<float>(n, value), requires_grad));
}

Tensor Tensor::from_vector(Shape shape, std::vector<float> values, bool requires_grad) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
    throw DimensionError("from_vector: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(shape));
  return wrap(new_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return wrap(new_leaf(Shape{}, std::vector<float>{value}, requires_grad));
}

float Tensor::item() const {
  if (numel() != 1)
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->values[0];
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

Tensor Tensor::detach() const {
  return wrap(new_leaf(impl_->shape, impl_->values, false));
}

Tensor Tensor::clone_leaf() const {
  return wrap(new_leaf(impl_->shape, impl_->values, impl_->requires_grad));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

Tensor make_result(Shape shape, std::vector<float> values, std::vector<Tensor> parents,
                   std::function<void(TensorImpl&)> backprop) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->values = std::move(values);
  bool track = g_grad_enabled &&
               std::any_of(parents.begin(), parents.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
  if (track) {
    impl->requires_grad = true;
    impl->leaf = false;
    impl->parents.reserve(parents.size());
    for (auto& p : parents) impl->parents.push_back(p.impl());
    impl->backprop = std::move(backprop);
  }
  return Tensor::wrap(std::move(impl));
}

}  // namespace detail

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward: loss must be a scalar tensor");
  using detail::TensorImpl;
  TensorImpl* root = loss.impl().get();

  // Iterative post-order DFS; the graph is acyclic by construction.
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* parent = node->parents[next++].get();
      if (seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (TensorImpl* node : order) {
    if (!node->leaf) {
      node->grad.assign(node->values.size(), 0.0f);
    } else if (node->requires_grad) {
      node->ensure_grad();
    }
  }
  if (root->leaf && !root->requires_grad) return;  // constant loss, nothing to do
  root->grad[0] += 1.0f;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backprop) node->backprop(*node);
  }
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<float> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto pa = a.impl(), pb = b.impl();
  return detail::make_result(a.shape(), std::move(out), {a, b},
                             [pa, pb](detail::TensorImpl& self) {
                               if (pa->requires_grad) {
                                 pa->ensure_grad();
                                 for (size_t i = 0; i < self.grad.size(); ++i)
                                   pa->grad[i] += self.grad[i];
                               }
                               if (pb->requires_grad) {
                                 pb->ensure_grad();
                                 for (size_t i = 0; i < self.grad.size(); ++i)
                                   pb->grad[i] += self.grad[i];
                               }
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<float> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  auto pa = a.impl(), pb = b.impl();
  return detail::make_result(a.shape(), std::move(out), {a, b},
                             [pa, pb](detail::TensorImpl& self) {
                               if (pa->requires_grad) {
                                 pa->ensure_grad();
                                 for (size_t i = 0; i < self.grad.size(); ++i)
                                   pa->grad[i] += self.grad[i];
                               }
                               if (pb->requires_grad) {
                                 pb->ensure_grad();
                                 for (size_t i = 0; i < self.grad.size(); ++i)
                                   pb->grad[i] -= self.grad[i];
                               }
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<float> out(a.numel());
  auto av = a.data(), bv = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto pa = a.impl(), pb = b.impl();
  return detail::make_result(a.shape(), std::move(out), {a, b},
                             [pa, pb](detail::TensorImpl& self) {
                               if (pa->requires_grad) {
                                 pa->ensure_grad();
                                 for (size_t i = 0; i < self.grad.size(); ++i)
                                   pa->grad[i] += self.grad[i] * pb->values[i];
                               }
                               if (pb->requires_grad) {
                                 pb->ensure_grad();
                                 for (size_t i = 0; i < self.grad.size(); ++i)
                                   pb->grad[i] += self.grad[i] * pa->values[i];
                               }
                             });
}

Tensor square(const Tensor& a) {
  std::vector<float> out(a.numel());
  auto av = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * av[i];
  auto pa = a.impl();
  return detail::make_result(a.shape(), std::move(out), {a},
                             [pa](detail::TensorImpl& self) {
                               if (!pa->requires_grad) return;
                               pa->ensure_grad();
                               for (size_t i = 0; i < self.grad.size(); ++i)
                                 pa->grad[i] += 2.0f * pa->values[i] * self.grad[i];
                             });
}

Tensor affine(const Tensor& a, float scale, float shift) {
  std::vector<float> out(a.numel());
  auto av = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = scale * av[i] + shift;
  auto pa = a.impl();
  return detail::make_result(a.shape(), std::move(out), {a},
                             [pa, scale](detail::TensorImpl& self) {
                               if (!pa->requires_grad) return;
                               pa->ensure_grad();
                               for (size_t i = 0; i < self.grad.size(); ++i)
                                 pa->grad[i] += scale * self.grad[i];
                             });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (float v : a.data()) acc += v;
  auto pa = a.impl();
  return detail::make_result(Shape{}, {static_cast<float>(acc)}, {a},
                             [pa](detail::TensorImpl& self) {
                               if (!pa->requires_grad) return;
                               pa->ensure_grad();
                               float g = self.grad[0];
                               for (auto& gv : pa->grad) gv += g;
                             });
}

}  // namespace abcm
