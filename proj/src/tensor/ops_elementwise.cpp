// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numbers>

#include "air/tensor/ops.hpp"
#include "kernels.hpp"

namespace air {
namespace {

// Strides of `in` (right-aligned) inside an output of shape `out`, with 0 on
// broadcast axes.
std::vector<std::int64_t> broadcast_strides(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  std::vector<std::int64_t> strides(r, 0);
  std::int64_t s = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t ai = in.size() - 1 - i;
    const std::size_t oi = r - 1 - i;
    strides[oi] = in[ai] == 1 ? 0 : s;
    s *= in[ai];
  }
  return strides;
}

// Visits every output index, passing the matching flat offsets into a and b.
template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::int64_t>& sa, const std::vector<std::int64_t>& sb,
                        F&& f) {
  const std::int64_t n = numel(out);
  if (n == 0) return;
  const std::size_t r = out.size();
  if (r == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t oa = 0, ob = 0;
  const std::int64_t inner = out[r - 1];
  const std::int64_t ia = sa[r - 1], ib = sb[r - 1];
  for (std::int64_t o = 0; o < n; o += inner) {
    for (std::int64_t j = 0; j < inner; ++j) {
      f(o + j, oa + j * ia, ob + j * ib);
    }
    // Advance the odometer over the outer axes.
    for (std::size_t ax = r - 1; ax-- > 0;) {
      ++idx[ax];
      oa += sa[ax];
      ob += sb[ax];
      if (idx[ax] < out[ax]) break;
      oa -= sa[ax] * idx[ax];
      ob -= sb[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

template <class Op>
Tensor binary_kernel(const char* name, const Tensor& a, const Tensor& b, Op op) {
  detail::require_same_dtype(name, a, b);
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Tensor out = Tensor::zeros(out_shape, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto pa = a.data<T>();
    auto pb = b.data<T>();
    auto po = out.mutable_data<T>();
    if (a.shape() == b.shape()) {
      for (std::size_t i = 0; i < po.size(); ++i) po[i] = op(pa[i], pb[i]);
      return;
    }
    if (b.numel() == 1 && a.shape() == out_shape) {
      const T bv = pb[0];
      for (std::size_t i = 0; i < po.size(); ++i) po[i] = op(pa[i], bv);
      return;
    }
    const auto sa = broadcast_strides(a.shape(), out_shape);
    const auto sb = broadcast_strides(b.shape(), out_shape);
    for_each_broadcast(out_shape, sa, sb,
                       [&](std::int64_t o, std::int64_t ia, std::int64_t ib) { po[o] = op(pa[ia], pb[ib]); });
  });
  return out;
}

Tensor reduce_if_needed(const Tensor& g, const Shape& shape) {
  return g.shape() == shape ? g : sum_to(g, shape);
}

template <class F, class D>
Tensor unary(const char* name, const Tensor& a, F f, D derivative) {
  Tensor out = detail::zeros_like(a);
  dispatch(a.dtype(), [&]<typename T>() {
    auto pa = a.data<T>();
    auto po = out.mutable_data<T>();
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = static_cast<T>(f(static_cast<double>(pa[i])));
  });
  return record(out, name, {a}, [a, derivative](const Tensor& g) {
    Tensor ga = detail::zeros_like(a);
    dispatch(a.dtype(), [&]<typename T>() {
      auto pa = a.data<T>();
      auto pg = g.data<T>();
      auto po = ga.mutable_data<T>();
      for (std::size_t i = 0; i < po.size(); ++i) {
        po[i] = static_cast<T>(static_cast<double>(pg[i]) * derivative(static_cast<double>(pa[i])));
      }
    });
    return std::vector<Tensor>{ga};
  });
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    }
    out[r - 1 - i] = da == 1 ? db : da;
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = binary_kernel("add", a, b, [](auto x, auto y) { return x + y; });
  return record(out, "add", {a, b}, [as = a.shape(), bs = b.shape()](const Tensor& g) {
    return std::vector<Tensor>{reduce_if_needed(g, as), reduce_if_needed(g, bs)};
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor out = binary_kernel("sub", a, b, [](auto x, auto y) { return x - y; });
  return record(out, "sub", {a, b}, [as = a.shape(), bs = b.shape()](const Tensor& g) {
    return std::vector<Tensor>{reduce_if_needed(g, as), reduce_if_needed(neg(g), bs)};
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = binary_kernel("mul", a, b, [](auto x, auto y) { return x * y; });
  return record(out, "mul", {a, b}, [a, b](const Tensor& g) {
    Tensor ga, gb;
    if (a.requires_grad()) ga = reduce_if_needed(mul(g, b), a.shape());
    if (b.requires_grad()) gb = reduce_if_needed(mul(g, a), b.shape());
    return std::vector<Tensor>{ga, gb};
  });
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = detail::zeros_like(a);
  dispatch(a.dtype(), [&]<typename T>() {
    auto pa = a.data<T>();
    auto po = out.mutable_data<T>();
    const T f = static_cast<T>(factor);
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] * f;
  });
  return record(out, "scale", {a}, [factor](const Tensor& g) { return std::vector<Tensor>{scale(g, factor)}; });
}

Tensor add_scalar(const Tensor& a, double value) {
  Tensor out = detail::zeros_like(a);
  dispatch(a.dtype(), [&]<typename T>() {
    auto pa = a.data<T>();
    auto po = out.mutable_data<T>();
    const T v = static_cast<T>(value);
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] + v;
  });
  return record(out, "add_scalar", {a}, [](const Tensor& g) { return std::vector<Tensor>{g}; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor cos(const Tensor& a) {
  return unary("cos", a, [](double x) { return std::cos(x); }, [](double x) { return -std::sin(x); });
}

Tensor sin(const Tensor& a) {
  return unary("sin", a, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      "gelu", a, [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [=](double x) { return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x); });
}

Tensor magnitude(const Tensor& re, const Tensor& im) {
  if (re.shape() != im.shape()) {
    throw ShapeError("magnitude: " + to_string(re.shape()) + " vs " + to_string(im.shape()));
  }
  Tensor out = binary_kernel("magnitude", re, im, [](auto x, auto y) { return std::hypot(x, y); });
  return record(out, "magnitude", {re, im}, [re, im, out = out.detach()](const Tensor& g) {
    Tensor gr = detail::zeros_like(re), gi = detail::zeros_like(im);
    dispatch(re.dtype(), [&]<typename T>() {
      auto r = re.data<T>();
      auto i = im.data<T>();
      auto m = out.data<T>();
      auto pg = g.data<T>();
      auto dr = gr.mutable_data<T>();
      auto di = gi.mutable_data<T>();
      for (std::size_t k = 0; k < m.size(); ++k) {
        if (m[k] == T(0)) continue;
        dr[k] = pg[k] * r[k] / m[k];
        di[k] = pg[k] * i[k] / m[k];
      }
    });
    return std::vector<Tensor>{gr, gi};
  });
}

Tensor phase(const Tensor& re, const Tensor& im) {
  if (re.shape() != im.shape()) {
    throw ShapeError("phase: " + to_string(re.shape()) + " vs " + to_string(im.shape()));
  }
  Tensor out = binary_kernel("phase", re, im, [](auto x, auto y) {
    using T = decltype(x);
    return (x == T(0) && y == T(0)) ? T(0) : std::atan2(y, x);
  });
  return record(out, "phase", {re, im}, [re, im](const Tensor& g) {
    Tensor gr = detail::zeros_like(re), gi = detail::zeros_like(im);
    dispatch(re.dtype(), [&]<typename T>() {
      auto r = re.data<T>();
      auto i = im.data<T>();
      auto pg = g.data<T>();
      auto dr = gr.mutable_data<T>();
      auto di = gi.mutable_data<T>();
      for (std::size_t k = 0; k < r.size(); ++k) {
        const T m2 = r[k] * r[k] + i[k] * i[k];
        if (m2 == T(0)) continue;
        dr[k] = -pg[k] * i[k] / m2;
        di[k] = pg[k] * r[k] / m2;
      }
    });
    return std::vector<Tensor>{gr, gi};
  });
}

Tensor scale_grad(const Tensor& a, double factor) {
  return record(a.detach(), "scale_grad", {a},
                [factor](const Tensor& g) { return std::vector<Tensor>{scale(g, factor)}; });
}

Tensor sum(const Tensor& a) {
  Tensor out = Tensor::zeros({}, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    double acc = 0.0;
    for (T v : a.data<T>()) acc += v;
    out.mutable_data<T>()[0] = static_cast<T>(acc);
  });
  return record(out, "sum", {a}, [s = a.shape()](const Tensor& g) { return std::vector<Tensor>{broadcast_to(g, s)}; });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor sum_to(const Tensor& a, const Shape& shape) {
  if (broadcast_shape(shape, a.shape()) != a.shape()) {
    throw ShapeError("sum_to: cannot reduce " + to_string(a.shape()) + " to " + to_string(shape));
  }
  Tensor out = Tensor::zeros(shape, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto pa = a.data<T>();
    auto po = out.mutable_data<T>();
    const auto so = broadcast_strides(shape, a.shape());
    // Walk `a` with the reduced operand playing the broadcast role.
    std::vector<std::int64_t> sa(a.shape().size());
    std::int64_t s = 1;
    for (std::size_t i = sa.size(); i-- > 0;) {
      sa[i] = s;
      s *= a.shape()[i];
    }
    for_each_broadcast(a.shape(), sa, so, [&](std::int64_t, std::int64_t ia, std::int64_t io) { po[io] += pa[ia]; });
  });
  return record(out, "sum_to", {a}, [s = a.shape()](const Tensor& g) { return std::vector<Tensor>{broadcast_to(g, s)}; });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  if (broadcast_shape(a.shape(), shape) != shape) {
    throw ShapeError("broadcast_to: cannot broadcast " + to_string(a.shape()) + " to " + to_string(shape));
  }
  Tensor out = Tensor::zeros(shape, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    auto pa = a.data<T>();
    auto po = out.mutable_data<T>();
    const auto sa = broadcast_strides(a.shape(), shape);
    const std::vector<std::int64_t> zero(shape.size(), 0);
    for_each_broadcast(shape, sa, zero, [&](std::int64_t o, std::int64_t ia, std::int64_t) { po[o] = pa[ia]; });
  });
  return record(out, "broadcast_to", {a}, [s = a.shape()](const Tensor& g) { return std::vector<Tensor>{sum_to(g, s)}; });
}

}  // namespace air
