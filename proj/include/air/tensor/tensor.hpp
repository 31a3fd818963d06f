// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "air/common/error.hpp"

namespace air {

enum class DType { f32, f64 };

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);
const char* to_string(DType dtype);
/// "f32" or "f64"; anything else is a ConfigError.
DType parse_dtype(const std::string& name);

/// Calls `f.template operator()<T>()` with T matching `dtype`.
template <class F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::f32) {
    return f.template operator()<float>();
  }
  return f.template operator()<double>();
}

template <class T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<double>() { return DType::f64; }

class Tensor;
struct TensorImpl;

/// Recorded primitive: its inputs and the rule mapping the output gradient to
/// input gradients. Entries for inputs that need no gradient may be left
/// undefined.
struct Node {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<std::vector<Tensor>(const Tensor& grad_out)> backward;
};

using Buffer = std::variant<std::vector<float>, std::vector<double>>;

struct TensorImpl {
  Shape shape;
  DType dtype = DType::f32;
  std::shared_ptr<Buffer> data;
  bool requires_grad = false;
  std::shared_ptr<Buffer> grad;
  std::shared_ptr<Node> grad_fn;
};

/// Dense row-major tensor with reference semantics: copies share storage and
/// autodiff state, like a handle. Values are immutable once produced by an op;
/// only leaves are mutated, and only through `mutable_data()` (optimizer
/// updates, initialisation).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, DType dtype = DType::f32);
  static Tensor full(const Shape& shape, double value, DType dtype = DType::f32);
  static Tensor from_values(const Shape& shape, std::span<const double> values, DType dtype = DType::f32);
  static Tensor from_values(const Shape& shape, std::initializer_list<double> values, DType dtype = DType::f32);
  template <class T>
  static Tensor from_vector(const Shape& shape, std::vector<T> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::int64_t dim(int axis) const;
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  std::int64_t numel() const { return air::numel(impl_->shape); }
  DType dtype() const { return impl_->dtype; }

  template <class T>
  std::span<const T> data() const;
  /// Writable view of a leaf's values. Throws for op outputs in the graph.
  template <class T>
  std::span<T> mutable_data();

  double at(std::int64_t flat_index) const;
  double item() const;
  std::vector<double> to_vector() const;
  /// Raw little-endian byte image of the values (for checksums and bit-exact
  /// comparisons).
  std::span<const std::byte> bytes() const;

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const { return impl_->grad_fn == nullptr; }
  bool has_grad() const { return impl_ && impl_->grad != nullptr; }
  /// Accumulated gradient (a fresh tensor without history); zeros if absent.
  Tensor grad() const;
  void zero_grad();
  /// Adds `g` into the accumulated gradient.
  void accumulate_grad(const Tensor& g);

  /// Same values, no history, fresh storage.
  Tensor clone() const;
  /// Same storage, no history.
  Tensor detach() const;
  Tensor to(DType dtype) const;

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate.
  void backward() const;

  const std::shared_ptr<Node>& grad_fn() const { return impl_->grad_fn; }
  TensorImpl* impl() const { return impl_.get(); }
  bool same_as(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend Tensor make_tensor(Shape, DType, std::shared_ptr<Buffer>);

  std::shared_ptr<TensorImpl> impl_;
};

/// Wraps an existing buffer without copying.
Tensor make_tensor(Shape shape, DType dtype, std::shared_ptr<Buffer> data);

template <class T>
Tensor Tensor::from_vector(const Shape& shape, std::vector<T> values) {
  if (static_cast<std::int64_t>(values.size()) != air::numel(shape)) {
    throw ShapeError("from_vector: " + std::to_string(values.size()) + " values for shape " + to_string(shape));
  }
  return make_tensor(shape, dtype_of<T>(), std::make_shared<Buffer>(std::move(values)));
}

template <class T>
std::span<const T> Tensor::data() const {
  const auto* v = std::get_if<std::vector<T>>(impl_->data.get());
  if (v == nullptr) {
    throw ContractError(std::string("data<T>: tensor dtype is ") + to_string(impl_->dtype));
  }
  return {v->data(), v->size()};
}

template <class T>
std::span<T> Tensor::mutable_data() {
  if (impl_->grad_fn) {
    throw ContractError("mutable_data: tensor is an op output recorded for autodiff");
  }
  auto* v = std::get_if<std::vector<T>>(impl_->data.get());
  if (v == nullptr) {
    throw ContractError(std::string("mutable_data<T>: tensor dtype is ") + to_string(impl_->dtype));
  }
  return {v->data(), v->size()};
}

/// Globally (per thread) disables graph recording while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// Attaches a backward rule to `value` when recording is on and any input
/// requires a gradient. Returns `value`.
Tensor record(Tensor value, std::string name, std::vector<Tensor> inputs,
              std::function<std::vector<Tensor>(const Tensor&)> backward);

/// Topological order (inputs before consumers) of the recorded graph reaching
/// `root`. Each node is visited exactly once.
std::vector<TensorImpl*> topological_order(const Tensor& root);

}  // namespace air
