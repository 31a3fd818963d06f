// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "air/tensor/ops.hpp"
#include "kernels.hpp"

namespace air {

Tensor softmax(const Tensor& x) {
  if (x.rank() < 1) {
    throw ShapeError("softmax: scalar input");
  }
  const std::int64_t inner = x.dim(-1);
  const std::int64_t rows = inner == 0 ? 0 : x.numel() / inner;
  Tensor out = detail::zeros_like(x);
  dispatch(x.dtype(), [&]<typename T>() {
    auto px = x.data<T>();
    auto po = out.mutable_data<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* src = px.data() + r * inner;
      T* dst = po.data() + r * inner;
      const T hi = *std::max_element(src, src + inner);
      double total = 0.0;
      for (std::int64_t i = 0; i < inner; ++i) {
        dst[i] = std::exp(src[i] - hi);
        total += dst[i];
      }
      const T inv = static_cast<T>(1.0 / total);
      for (std::int64_t i = 0; i < inner; ++i) dst[i] *= inv;
    }
  });
  return record(out, "softmax", {x}, [y = out.detach(), inner, rows](const Tensor& g) {
    Tensor gx = detail::zeros_like(y);
    dispatch(y.dtype(), [&]<typename T>() {
      auto py = y.data<T>();
      auto pg = g.data<T>();
      auto pd = gx.mutable_data<T>();
      for (std::int64_t r = 0; r < rows; ++r) {
        const std::int64_t o = r * inner;
        double dot = 0.0;
        for (std::int64_t i = 0; i < inner; ++i) dot += static_cast<double>(pg[o + i]) * py[o + i];
        for (std::int64_t i = 0; i < inner; ++i) pd[o + i] = py[o + i] * (pg[o + i] - static_cast<T>(dot));
      }
    });
    return std::vector<Tensor>{gx};
  });
}

Tensor softmax_spatial(const Tensor& x) {
  detail::require_rank("softmax_spatial", x, 4);
  if (x.dim(1) != 1) {
    throw ShapeError("softmax_spatial: expected a single channel, got " + to_string(x.shape()));
  }
  return reshape(softmax(reshape(x, {x.dim(0), x.dim(2) * x.dim(3)})), x.shape());
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::int64_t d = x.dim(-1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: affine parameters must have shape [" + std::to_string(d) + "]");
  }
  detail::require_same_dtype("layer_norm", x, gamma);
  const std::int64_t rows = x.numel() / d;
  Tensor out = detail::zeros_like(x);
  Tensor xhat = detail::zeros_like(x);
  Tensor rstd = Tensor::zeros({rows}, x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto px = x.data<T>();
    auto pg = gamma.data<T>();
    auto pb = beta.data<T>();
    auto po = out.mutable_data<T>();
    auto ph = xhat.mutable_data<T>();
    auto pr = rstd.mutable_data<T>();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* src = px.data() + r * d;
      double mu = 0.0;
      for (std::int64_t i = 0; i < d; ++i) mu += src[i];
      mu /= static_cast<double>(d);
      double var = 0.0;
      for (std::int64_t i = 0; i < d; ++i) var += (src[i] - mu) * (src[i] - mu);
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + eps);
      pr[static_cast<std::size_t>(r)] = static_cast<T>(inv);
      for (std::int64_t i = 0; i < d; ++i) {
        const T h = static_cast<T>((src[i] - mu) * inv);
        ph[static_cast<std::size_t>(r * d + i)] = h;
        po[static_cast<std::size_t>(r * d + i)] = h * pg[static_cast<std::size_t>(i)] + pb[static_cast<std::size_t>(i)];
      }
    }
  });
  return record(out, "layer_norm", {x, gamma, beta}, [xhat, rstd, gamma, x, d, rows](const Tensor& g) {
    std::vector<Tensor> grads(3);
    const bool need_x = x.requires_grad();
    grads[1] = detail::zeros_like(gamma);
    grads[2] = detail::zeros_like(gamma);
    if (need_x) grads[0] = detail::zeros_like(x);
    dispatch(g.dtype(), [&]<typename T>() {
      auto pg = g.data<T>();
      auto ph = xhat.data<T>();
      auto pr = rstd.data<T>();
      auto gam = gamma.data<T>();
      auto dg = grads[1].mutable_data<T>();
      auto db = grads[2].mutable_data<T>();
      std::span<T> dx;
      if (need_x) dx = grads[0].mutable_data<T>();
      for (std::int64_t r = 0; r < rows; ++r) {
        const std::size_t o = static_cast<std::size_t>(r * d);
        double sum_dh = 0.0, sum_dh_h = 0.0;
        for (std::int64_t i = 0; i < d; ++i) {
          const auto k = o + static_cast<std::size_t>(i);
          const double dh = static_cast<double>(pg[k]) * gam[static_cast<std::size_t>(i)];
          dg[static_cast<std::size_t>(i)] += pg[k] * ph[k];
          db[static_cast<std::size_t>(i)] += pg[k];
          sum_dh += dh;
          sum_dh_h += dh * ph[k];
        }
        if (!need_x) continue;
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::int64_t i = 0; i < d; ++i) {
          const auto k = o + static_cast<std::size_t>(i);
          const double dh = static_cast<double>(pg[k]) * gam[static_cast<std::size_t>(i)];
          dx[k] = static_cast<T>(pr[static_cast<std::size_t>(r)] * (dh - sum_dh * inv_d - ph[k] * sum_dh_h * inv_d));
        }
      }
    });
    return grads;
  });
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("l1_loss: prediction " + to_string(pred.shape()) + " vs target " + to_string(target.shape()));
  }
  detail::require_same_dtype("l1_loss", pred, target);
  Tensor out = Tensor::zeros({}, pred.dtype());
  const double n = static_cast<double>(pred.numel());
  dispatch(pred.dtype(), [&]<typename T>() {
    auto p = pred.data<T>();
    auto t = target.data<T>();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) acc += std::abs(static_cast<double>(p[i]) - t[i]);
    out.mutable_data<T>()[0] = static_cast<T>(acc / n);
  });
  return record(out, "l1_loss", {pred, target}, [pred, target, n](const Tensor& g) {
    std::vector<Tensor> grads(2);
    dispatch(pred.dtype(), [&]<typename T>() {
      auto p = pred.data<T>();
      auto t = target.data<T>();
      const double scale = static_cast<double>(g.data<T>()[0]) / n;
      Tensor gp = detail::zeros_like(pred);
      auto d = gp.mutable_data<T>();
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double diff = static_cast<double>(p[i]) - t[i];
        d[i] = static_cast<T>(diff > 0 ? scale : (diff < 0 ? -scale : 0.0));
      }
      if (pred.requires_grad()) grads[0] = gp;
      if (target.requires_grad()) grads[1] = neg(gp);
    });
    return grads;
  });
}

}  // namespace air
