// SPDX-License-Identifier: Apache-2.0
#include "air/tensor/ops.hpp"
#include "kernels.hpp"

namespace air {

Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank("matmul", a, 2);
  detail::require_rank("matmul", b, 2);
  detail::require_same_dtype("matmul", a, b);
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner extents differ, " + to_string(a.shape()) + " · " + to_string(b.shape()));
  }
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n}, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    detail::gemm<T>(false, false, m, n, k, T(1), a.data<T>().data(), k, b.data<T>().data(), n, T(0),
                    out.mutable_data<T>().data(), n);
  });
  return record(out, "matmul", {a, b}, [a, b](const Tensor& g) {
    Tensor ga, gb;
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    dispatch(a.dtype(), [&]<typename T>() {
      if (a.requires_grad()) {
        ga = detail::zeros_like(a);
        detail::gemm<T>(false, true, m, k, n, T(1), g.data<T>().data(), n, b.data<T>().data(), n, T(0),
                        ga.mutable_data<T>().data(), k);
      }
      if (b.requires_grad()) {
        gb = detail::zeros_like(b);
        detail::gemm<T>(true, false, k, n, m, T(1), a.data<T>().data(), k, g.data<T>().data(), n, T(0),
                        gb.mutable_data<T>().data(), n);
      }
    });
    return std::vector<Tensor>{ga, gb};
  });
}

namespace {

// out[b] = op(A[b])·op(B[b]) accumulated into `out` with coefficient beta.
template <class T>
void batched(bool ta, bool tb, std::int64_t batch, std::int64_t m, std::int64_t n, std::int64_t k, const T* a,
             std::int64_t a_rows, std::int64_t a_cols, const T* b, std::int64_t b_rows, std::int64_t b_cols, T* c) {
  for (std::int64_t i = 0; i < batch; ++i) {
    detail::gemm<T>(ta, tb, m, n, k, T(1), a + i * a_rows * a_cols, a_cols, b + i * b_rows * b_cols, b_cols, T(0),
                    c + i * m * n, n);
  }
}

}  // namespace

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
  detail::require_rank("bmm", a, 3);
  detail::require_rank("bmm", b, 3);
  detail::require_same_dtype("bmm", a, b);
  const auto batch = a.dim(0);
  const auto ar = a.dim(1), ac = a.dim(2), br = b.dim(1), bc = b.dim(2);
  const auto m = transpose_a ? ac : ar;
  const auto k = transpose_a ? ar : ac;
  const auto kb = transpose_b ? bc : br;
  const auto n = transpose_b ? br : bc;
  if (b.dim(0) != batch || k != kb) {
    throw ShapeError("bmm: " + to_string(a.shape()) + " · " + to_string(b.shape()));
  }
  Tensor out = Tensor::zeros({batch, m, n}, a.dtype());
  dispatch(a.dtype(), [&]<typename T>() {
    batched<T>(transpose_a, transpose_b, batch, m, n, k, a.data<T>().data(), ar, ac, b.data<T>().data(), br, bc,
               out.mutable_data<T>().data());
  });
  return record(out, "bmm", {a, b}, [a, b, transpose_a, transpose_b](const Tensor& g) {
    // C = op(A)·op(B). dop(A) = G·op(B)ᵀ, dop(B) = op(A)ᵀ·G, then undo the op.
    Tensor ga, gb;
    if (a.requires_grad()) {
      ga = transpose_a ? bmm(b, g, transpose_b, true) : bmm(g, b, false, !transpose_b);
    }
    if (b.requires_grad()) {
      gb = transpose_b ? bmm(g, a, true, transpose_a) : bmm(a, g, !transpose_a, false);
    }
    return std::vector<Tensor>{ga, gb};
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias) {
  detail::require_rank("linear", x, 2);
  detail::require_rank("linear", weight, 2);
  detail::require_same_dtype("linear", x, weight);
  const auto m = x.dim(0), k = x.dim(1), n = weight.dim(0);
  if (weight.dim(1) != k) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " against weight " + to_string(weight.shape()));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != n)) {
    throw ShapeError("linear: bias " + to_string(bias->shape()) + " for " + std::to_string(n) + " outputs");
  }
  Tensor out = Tensor::zeros({m, n}, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    T* po = out.mutable_data<T>().data();
    detail::gemm<T>(false, true, m, n, k, T(1), x.data<T>().data(), k, weight.data<T>().data(), k, T(0), po, n);
    if (bias) {
      auto pb = bias->data<T>();
      for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t j = 0; j < n; ++j) po[i * n + j] += pb[static_cast<std::size_t>(j)];
      }
    }
  });
  std::vector<Tensor> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return record(out, "linear", inputs, [x, weight, bias](const Tensor& g) {
    const auto m = x.dim(0), k = x.dim(1), n = weight.dim(0);
    std::vector<Tensor> grads(bias ? 3 : 2);
    dispatch(x.dtype(), [&]<typename T>() {
      const T* pg = g.data<T>().data();
      if (x.requires_grad()) {
        grads[0] = detail::zeros_like(x);
        detail::gemm<T>(false, false, m, k, n, T(1), pg, n, weight.data<T>().data(), k, T(0),
                        grads[0].mutable_data<T>().data(), k);
      }
      if (weight.requires_grad()) {
        grads[1] = detail::zeros_like(weight);
        detail::gemm<T>(true, false, n, k, m, T(1), pg, n, x.data<T>().data(), k, T(0),
                        grads[1].mutable_data<T>().data(), k);
      }
      if (bias && bias->requires_grad()) {
        grads[2] = detail::zeros_like(*bias);
        auto pb = grads[2].mutable_data<T>();
        for (std::int64_t i = 0; i < m; ++i) {
          for (std::int64_t j = 0; j < n; ++j) pb[static_cast<std::size_t>(j)] += pg[i * n + j];
        }
      }
    });
    return grads;
  });
}

}  // namespace air
