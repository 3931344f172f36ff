#ifndef ABCM_TENSOR_HPP
#define ABCM_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "abcm/errors.hpp"

namespace abcm {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One node of the reverse-mode graph. Results of tracked ops hold their
// inputs alive through `parents`; `backprop` reads this node's grad and
// accumulates into the parents' grads.
struct TensorImpl {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;  // allocated lazily; persists on leaves
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::function<void(TensorImpl&)> backprop;

  std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0f);
  }
};

}  // namespace detail

// Dense row-major float32 tensor with optional gradient tracking. Copies are
// shallow; values are immutable once produced by an op except through
// mutable_data(), which exists for parameter updates.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<float> values,
                            bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int axis) const { return impl_->shape[axis]; }
  std::int64_t numel() const { return impl_->numel(); }

  std::span<const float> data() const { return impl_->values; }
  std::span<float> mutable_data() { return impl_->values; }
  float item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const float> grad() const { return impl_->grad; }
  std::span<float> mutable_grad() { return impl_->grad; }
  void zero_grad();

  // Same values, no graph, no gradient tracking.
  Tensor detach() const;
  // Deep copy that keeps requires_grad but starts a fresh leaf.
  Tensor clone_leaf() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  static Tensor wrap(std::shared_ptr<detail::TensorImpl> impl) {
    Tensor t;
    t.impl_ = std::move(impl);
    return t;
  }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
// calls until zero_grad(); interior gradients are scratch per call.
void backward(const Tensor& loss);

// Disables graph construction on the current thread while alive. Forward
// values are unchanged.
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

// Elementwise and reduction primitives. All validate shapes and participate
// in the graph when any input requires grad.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor square(const Tensor& a);
// scale * a + shift, elementwise.
Tensor affine(const Tensor& a, float scale, float shift);
// Sum of all elements to a scalar. Accumulates in double.
Tensor sum(const Tensor& a);

namespace detail {
// Op constructor used by all kernels: inherits requires_grad from parents
// when graph construction is enabled on this thread.
Tensor make_result(Shape shape, std::vector<float> values,
                   std::vector<Tensor> parents,
                   std::function<void(TensorImpl&)> backprop);
}  // namespace detail

}  // namespace abcm

#endif  // ABCM_TENSOR_HPP
