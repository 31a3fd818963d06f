// SPDX-License-Identifier: Apache-2.0
#include "air/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace air {
namespace {

thread_local bool g_grad_mode = true;

std::shared_ptr<Buffer> allocate(DType dtype, std::int64_t n, double value = 0.0) {
  if (dtype == DType::f32) {
    return std::make_shared<Buffer>(std::vector<float>(static_cast<std::size_t>(n), static_cast<float>(value)));
  }
  return std::make_shared<Buffer>(std::vector<double>(static_cast<std::size_t>(n), value));
}

void check_shape(const Shape& shape) {
  for (auto d : shape) {
    if (d < 0) {
      throw ShapeError("negative extent in shape " + to_string(shape));
    }
  }
}

void add_into(Buffer& dst, const Tensor& src) {
  std::visit(
      [&](auto& vec) {
        using T = typename std::decay_t<decltype(vec)>::value_type;
        if (src.dtype() == dtype_of<T>()) {
          auto s = src.data<T>();
          for (std::size_t i = 0; i < vec.size(); ++i) vec[i] += s[i];
        } else {
          auto s = src.to(dtype_of<T>());
          auto d = s.template data<T>();
          for (std::size_t i = 0; i < vec.size(); ++i) vec[i] += d[i];
        }
      },
      dst);
}

}  // namespace

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }
DType parse_dtype(const std::string& name) {
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  throw ConfigError("unknown dtype '" + name + "' (expected f32 or f64)");
}

Tensor make_tensor(Shape shape, DType dtype, std::shared_ptr<Buffer> data) {
  check_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->dtype = dtype;
  impl->data = std::move(data);
  return Tensor(std::move(impl));
}

Tensor Tensor::zeros(const Shape& shape, DType dtype) { return full(shape, 0.0, dtype); }

Tensor Tensor::full(const Shape& shape, double value, DType dtype) {
  check_shape(shape);
  return make_tensor(shape, dtype, allocate(dtype, air::numel(shape), value));
}

Tensor Tensor::from_values(const Shape& shape, std::span<const double> values, DType dtype) {
  if (static_cast<std::int64_t>(values.size()) != air::numel(shape)) {
    throw ShapeError("from_values: " + std::to_string(values.size()) + " values for shape " + to_string(shape));
  }
  auto t = zeros(shape, dtype);
  dispatch(dtype, [&]<typename T>() {
    auto d = t.mutable_data<T>();
    std::transform(values.begin(), values.end(), d.begin(), [](double v) { return static_cast<T>(v); });
  });
  return t;
}

Tensor Tensor::from_values(const Shape& shape, std::initializer_list<double> values, DType dtype) {
  return from_values(shape, std::span<const double>(values.begin(), values.size()), dtype);
}

std::int64_t Tensor::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(a)];
}

double Tensor::at(std::int64_t i) const {
  return dispatch(dtype(), [&]<typename T>() { return static_cast<double>(data<T>()[static_cast<std::size_t>(i)]); });
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item: tensor of shape " + to_string(shape()) + " is not a scalar");
  }
  return at(0);
}

std::vector<double> Tensor::to_vector() const {
  return dispatch(dtype(), [&]<typename T>() {
    auto d = data<T>();
    return std::vector<double>(d.begin(), d.end());
  });
}

std::span<const std::byte> Tensor::bytes() const {
  return dispatch(dtype(), [&]<typename T>() { return std::as_bytes(data<T>()); });
}

Tensor& Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) {
    throw ContractError("set_requires_grad: only leaves can change their gradient flag");
  }
  impl_->requires_grad = flag;
  return *this;
}

Tensor Tensor::grad() const {
  if (!impl_->grad) {
    return zeros(shape(), dtype());
  }
  return make_tensor(shape(), dtype(), std::make_shared<Buffer>(*impl_->grad));
}

void Tensor::zero_grad() { impl_->grad.reset(); }

void Tensor::accumulate_grad(const Tensor& g) {
  if (g.shape() != shape()) {
    throw ShapeError("accumulate_grad: gradient " + to_string(g.shape()) + " for tensor " + to_string(shape()));
  }
  if (!impl_->grad) {
    impl_->grad = allocate(dtype(), numel());
  }
  add_into(*impl_->grad, g);
}

Tensor Tensor::clone() const { return make_tensor(shape(), dtype(), std::make_shared<Buffer>(*impl_->data)); }

Tensor Tensor::detach() const { return make_tensor(shape(), dtype(), impl_->data); }

Tensor Tensor::to(DType target) const {
  if (target == dtype()) {
    return clone();
  }
  auto out = zeros(shape(), target);
  dispatch(dtype(), [&]<typename S>() {
    auto src = data<S>();
    dispatch(target, [&]<typename D>() {
      auto dst = out.mutable_data<D>();
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<D>(src[i]);
    });
  });
  return out;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = previous_; }

bool grad_mode_enabled() { return g_grad_mode; }

Tensor record(Tensor value, std::string name, std::vector<Tensor> inputs,
              std::function<std::vector<Tensor>(const Tensor&)> backward) {
#ifndef NDEBUG
  dispatch(value.dtype(), [&]<typename T>() {
    for (T v : value.data<T>()) {
      if (!std::isfinite(v)) {
        bool finite_inputs = true;
        for (const auto& in : inputs) {
          for (double x : in.to_vector()) finite_inputs = finite_inputs && std::isfinite(x);
        }
        if (finite_inputs) throw ContractError(name + ": non-finite output from finite inputs");
        break;
      }
    }
  });
#endif
  if (!g_grad_mode) {
    return value;
  }
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) {
    return value;
  }
  auto node = std::make_shared<Node>();
  node->name = std::move(name);
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  value.impl()->grad_fn = std::move(node);
  value.impl()->requires_grad = true;
  return value;
}

std::vector<TensorImpl*> topological_order(const Tensor& root) {
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> visited;
  // Iterative post-order DFS; graphs can be thousands of nodes deep.
  std::vector<std::pair<TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root.impl(), 0);
  visited.insert(root.impl());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto& fn = impl->grad_fn;
    if (fn && next < fn->inputs.size()) {
      TensorImpl* child = fn->inputs[next++].impl();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
      continue;
    }
    order.push_back(impl);
    stack.pop_back();
  }
  return order;
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + to_string(shape()));
  }
  if (!requires_grad()) {
    throw ContractError("backward: loss is not connected to any tensor requiring a gradient");
  }
  NoGradGuard no_grad;
  const auto order = topological_order(*this);
  std::unordered_map<TensorImpl*, Tensor> grads;
  grads.emplace(impl(), Tensor::full(shape(), 1.0, dtype()));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* impl = *it;
    auto found = grads.find(impl);
    if (found == grads.end()) {
      continue;
    }
    Tensor g = found->second;
    grads.erase(found);
    if (!impl->grad_fn) {
      if (impl->requires_grad) {
        if (!impl->grad) {
          impl->grad = allocate(impl->dtype, air::numel(impl->shape));
        }
        add_into(*impl->grad, g);
      }
      continue;
    }
    const auto& node = *impl->grad_fn;
    auto input_grads = node.backward(g);
    for (std::size_t i = 0; i < node.inputs.size() && i < input_grads.size(); ++i) {
      const Tensor& in = node.inputs[i];
      const Tensor& gi = input_grads[i];
      if (!gi.defined() || !in.requires_grad()) {
        continue;
      }
      if (gi.shape() != in.shape()) {
        throw ShapeError(node.name + " backward: gradient " + to_string(gi.shape()) + " for input " +
                         to_string(in.shape()));
      }
      auto [slot, inserted] = grads.try_emplace(in.impl(), gi);
      if (!inserted) {
        Tensor sum = slot->second.clone();
        add_into(*sum.impl()->data, gi);
        slot->second = sum;
      }
    }
  }
}

}  // namespace air
