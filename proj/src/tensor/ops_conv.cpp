// SPDX-License-Identifier: Apache-2.0
#include <vector>

#include "air/tensor/ops.hpp"
#include "kernels.hpp"

namespace air {
namespace {

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, k, stride, groups, pad, ho, wo;
  std::int64_t cin_g() const { return cin / groups; }
  std::int64_t cout_g() const { return cout / groups; }
  std::int64_t col_rows() const { return cin_g() * k * k; }
  std::int64_t col_cols() const { return ho * wo; }
  bool pointwise() const { return k == 1 && stride == 1; }
};

ConvGeometry geometry(const Tensor& x, const Tensor& weight, const Conv2dOptions& opt) {
  detail::require_rank("conv2d", x, 4);
  detail::require_rank("conv2d", weight, 4);
  detail::require_same_dtype("conv2d", x, weight);
  ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = opt.stride;
  g.groups = opt.groups;
  if (g.groups < 1 || g.cin % g.groups != 0 || g.cout % g.groups != 0) {
    throw ConfigError("conv2d: groups=" + std::to_string(g.groups) + " must divide Cin=" + std::to_string(g.cin) +
                      " and Cout=" + std::to_string(g.cout));
  }
  if (weight.dim(3) != g.k || g.k % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd extent, got " + to_string(weight.shape()));
  }
  if (weight.dim(1) != g.cin_g()) {
    throw ShapeError("conv2d: weight " + to_string(weight.shape()) + " expects " +
                     std::to_string(weight.dim(1) * g.groups) + " input channels, input is " + to_string(x.shape()));
  }
  if (g.stride < 1) {
    throw ConfigError("conv2d: stride must be positive");
  }
  g.pad = (g.k - 1) / 2;
  g.ho = (g.h + 2 * g.pad - g.k) / g.stride + 1;
  g.wo = (g.w + 2 * g.pad - g.k) / g.stride + 1;
  return g;
}

template <class T>
void im2col(const ConvGeometry& g, const T* x /* cin_g×h×w */, T* col) {
  for (std::int64_t c = 0; c < g.cin_g(); ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((c * g.k + ky) * g.k + kx) * g.col_cols();
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          T* dst = row + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          const T* src = x + (c * g.h + iy) * g.w;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix < 0 || ix >= g.w) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const ConvGeometry& g, const T* col, T* dx /* cin_g×h×w, accumulated */) {
  for (std::int64_t c = 0; c < g.cin_g(); ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((c * g.k + ky) * g.k + kx) * g.col_cols();
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          T* dst = dx + (c * g.h + iy) * g.w;
          const T* src = row + oy * g.wo;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias, Conv2dOptions options) {
  const ConvGeometry g = geometry(x, weight, options);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.cout)) {
    throw ShapeError("conv2d: bias " + to_string(bias->shape()) + " for " + std::to_string(g.cout) + " channels");
  }
  Tensor out = Tensor::zeros({g.n, g.cout, g.ho, g.wo}, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    const T* px = x.data<T>().data();
    const T* pw = weight.data<T>().data();
    T* po = out.mutable_data<T>().data();
    std::vector<T> col(g.pointwise() ? 0 : static_cast<std::size_t>(g.col_rows() * g.col_cols()));
    for (std::int64_t s = 0; s < g.n; ++s) {
      for (std::int64_t grp = 0; grp < g.groups; ++grp) {
        const T* xin = px + (s * g.cin + grp * g.cin_g()) * g.h * g.w;
        const T* cols = xin;
        if (!g.pointwise()) {
          im2col(g, xin, col.data());
          cols = col.data();
        }
        detail::gemm<T>(false, false, g.cout_g(), g.col_cols(), g.col_rows(), T(1), pw + grp * g.cout_g() * g.col_rows(),
                        g.col_rows(), cols, g.col_cols(), T(0), po + (s * g.cout + grp * g.cout_g()) * g.col_cols(),
                        g.col_cols());
      }
      if (bias) {
        auto pb = bias->data<T>();
        for (std::int64_t c = 0; c < g.cout; ++c) {
          T* plane = po + (s * g.cout + c) * g.col_cols();
          for (std::int64_t i = 0; i < g.col_cols(); ++i) plane[i] += pb[static_cast<std::size_t>(c)];
        }
      }
    }
  });
  std::vector<Tensor> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return record(out, "conv2d", inputs, [x, weight, bias, g](const Tensor& grad) {
    std::vector<Tensor> grads(bias ? 3 : 2);
    const bool need_x = x.requires_grad();
    const bool need_w = weight.requires_grad();
    dispatch(x.dtype(), [&]<typename T>() {
      const T* px = x.data<T>().data();
      const T* pw = weight.data<T>().data();
      const T* pg = grad.data<T>().data();
      T* dx = nullptr;
      T* dw = nullptr;
      if (need_x) {
        grads[0] = detail::zeros_like(x);
        dx = grads[0].mutable_data<T>().data();
      }
      if (need_w) {
        grads[1] = detail::zeros_like(weight);
        dw = grads[1].mutable_data<T>().data();
      }
      const std::size_t col_size = static_cast<std::size_t>(g.col_rows() * g.col_cols());
      std::vector<T> col(col_size), dcol(col_size);
      for (std::int64_t s = 0; s < g.n && (need_x || need_w); ++s) {
        for (std::int64_t grp = 0; grp < g.groups; ++grp) {
          const T* gout = pg + (s * g.cout + grp * g.cout_g()) * g.col_cols();
          const T* wg = pw + grp * g.cout_g() * g.col_rows();
          const std::int64_t in_off = (s * g.cin + grp * g.cin_g()) * g.h * g.w;
          if (need_w) {
            const T* cols = px + in_off;
            if (!g.pointwise()) {
              im2col(g, px + in_off, col.data());
              cols = col.data();
            }
            detail::gemm<T>(false, true, g.cout_g(), g.col_rows(), g.col_cols(), T(1), gout, g.col_cols(), cols,
                            g.col_cols(), T(1), dw + grp * g.cout_g() * g.col_rows(), g.col_rows());
          }
          if (need_x) {
            if (g.pointwise()) {
              detail::gemm<T>(true, false, g.col_rows(), g.col_cols(), g.cout_g(), T(1), wg, g.col_rows(), gout,
                              g.col_cols(), T(1), dx + in_off, g.col_cols());
            } else {
              detail::gemm<T>(true, false, g.col_rows(), g.col_cols(), g.cout_g(), T(1), wg, g.col_rows(), gout,
                              g.col_cols(), T(0), dcol.data(), g.col_cols());
              col2im(g, dcol.data(), dx + in_off);
            }
          }
        }
      }
      if (bias && bias->requires_grad()) {
        grads[2] = detail::zeros_like(*bias);
        auto db = grads[2].mutable_data<T>();
        for (std::int64_t s = 0; s < g.n; ++s) {
          for (std::int64_t c = 0; c < g.cout; ++c) {
            const T* plane = pg + (s * g.cout + c) * g.col_cols();
            T acc = 0;
            for (std::int64_t i = 0; i < g.col_cols(); ++i) acc += plane[i];
            db[static_cast<std::size_t>(c)] += acc;
          }
        }
      }
    });
    return grads;
  });
}

}  // namespace air
