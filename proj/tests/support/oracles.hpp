// SPDX-License-Identifier: Apache-2.0
// Brute-force reference implementations used only by tests. They share no
// code with the library kernels.
#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "air/common/rng.hpp"
#include "air/tensor/tensor.hpp"

namespace air::testing {

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            DType dtype = DType::f64) {
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_values(shape, v, dtype);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < a.size() && i < b.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) { return max_abs_diff(a.to_vector(), b.to_vector()); }

inline std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b, int m, int k,
                                        int n) {
  std::vector<double> c(static_cast<std::size_t>(m * n), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int t = 0; t < k; ++t) c[i * n + j] += a[i * k + t] * b[t * n + j];
  return c;
}

/// Zero-padded "same" cross-correlation, written as nested loops.
inline std::vector<double> naive_conv2d(const std::vector<double>& x, const std::vector<double>& w,
                                        const std::vector<double>* bias, int n, int cin, int h, int wd, int cout,
                                        int k, int groups, int stride = 1) {
  const int pad = (k - 1) / 2;
  const int ho = (h + 2 * pad - k) / stride + 1, wo = (wd + 2 * pad - k) / stride + 1;
  const int cin_g = cin / groups, cout_g = cout / groups;
  std::vector<double> out(static_cast<std::size_t>(n * cout * ho * wo), 0.0);
  for (int s = 0; s < n; ++s)
    for (int o = 0; o < cout; ++o) {
      const int g = o / cout_g;
      for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
          double acc = bias ? (*bias)[o] : 0.0;
          for (int ci = 0; ci < cin_g; ++ci)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                const int c = g * cin_g + ci;
                acc += w[((o * cin_g + ci) * k + ky) * k + kx] * x[((s * cin + c) * h + iy) * wd + ix];
              }
          out[((s * cout + o) * ho + oy) * wo + ox] = acc;
        }
    }
  return out;
}

/// Half spectrum of one H×W plane by the defining double sum, 1/(HW) forward.
inline std::vector<std::complex<double>> naive_rdft2(const std::vector<double>& x, int h, int w) {
  const int wh = w / 2 + 1;
  std::vector<std::complex<double>> out(static_cast<std::size_t>(h * wh));
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < wh; ++v) {
      std::complex<double> acc = 0.0;
      for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
          const double a = -2.0 * std::numbers::pi * (static_cast<double>(u * r) / h + static_cast<double>(v * c) / w);
          acc += x[r * w + c] * std::complex<double>(std::cos(a), std::sin(a));
        }
      out[u * wh + v] = acc / static_cast<double>(h * w);
    }
  return out;
}

/// Full complex spectrum by its Hermitian extension, then the unnormalized
/// inverse double sum, real part.
inline std::vector<double> naive_irdft2(const std::vector<std::complex<double>>& half, int h, int w) {
  const int wh = w / 2 + 1;
  auto full = [&](int u, int v) -> std::complex<double> {
    if (v < wh) return half[u * wh + v];
    return std::conj(half[((h - u) % h) * wh + (w - v)]);
  };
  std::vector<double> x(static_cast<std::size_t>(h * w));
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      std::complex<double> acc = 0.0;
      for (int u = 0; u < h; ++u)
        for (int v = 0; v < w; ++v) {
          const double a = 2.0 * std::numbers::pi * (static_cast<double>(u * r) / h + static_cast<double>(v * c) / w);
          acc += full(u, v) * std::complex<double>(std::cos(a), std::sin(a));
        }
      x[r * w + c] = acc.real();
    }
  return x;
}

inline std::vector<double> direct_softmax(const std::vector<double>& x, int rows, int cols) {
  std::vector<double> y(x.size());
  for (int r = 0; r < rows; ++r) {
    long double total = 0.0L;
    for (int c = 0; c < cols; ++c) total += std::exp(static_cast<long double>(x[r * cols + c]));
    for (int c = 0; c < cols; ++c)
      y[r * cols + c] = static_cast<double>(std::exp(static_cast<long double>(x[r * cols + c])) / total);
  }
  return y;
}

}  // namespace air::testing
