// SPDX-License-Identifier: Apache-2.0
#include "air/tensor/fft.hpp"

#include <cmath>
#include <numbers>

#include "kernels.hpp"

namespace air {
namespace fft {

namespace {
bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }
}  // namespace

Plan::Plan(std::size_t n) : n_(n), pow2_(is_pow2(n)) {
  if (n == 0) {
    throw ShapeError("fft: zero-length transform");
  }
  if (pow2_) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    bitrev_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
      bitrev_[i] = r;
    }
    twiddle_.resize(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = {std::cos(a), std::sin(a)};
    }
    return;
  }
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  inner_ = std::make_unique<Plan>(m);
  chirp_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k² mod 2n keeps the angle argument small and exact.
    const auto k2 = static_cast<double>((k * k) % (2 * n));
    const double a = -std::numbers::pi * k2 / static_cast<double>(n);
    chirp_[k] = {std::cos(a), std::sin(a)};
  }
  kernel_fft_.assign(m, {0.0, 0.0});
  kernel_fft_[0] = std::conj(chirp_[0]);
  for (std::size_t k = 1; k < n; ++k) {
    kernel_fft_[k] = std::conj(chirp_[k]);
    kernel_fft_[m - k] = std::conj(chirp_[k]);
  }
  inner_->execute(kernel_fft_, false);
}

void Plan::radix2(std::complex<double>* data, bool inverse) const {
  for (std::size_t i = 0; i < n_; ++i) {
    if (i < bitrev_[i]) std::swap(data[i], data[bitrev_[i]]);
  }
  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t j = 0; j < half; ++j) {
        std::complex<double> w = twiddle_[j * step];
        if (inverse) w = std::conj(w);
        const std::complex<double> t = w * data[start + j + half];
        data[start + j + half] = data[start + j] - t;
        data[start + j] += t;
      }
    }
  }
}

void Plan::execute(std::span<std::complex<double>> data, bool inverse) const {
  if (data.size() != n_) {
    throw ShapeError("fft: plan of length " + std::to_string(n_) + " applied to " + std::to_string(data.size()));
  }
  if (pow2_) {
    radix2(data.data(), inverse);
    return;
  }
  // The inverse transform is the conjugate of the forward one on conjugated data.
  const std::size_t m = inner_->size();
  std::vector<std::complex<double>> a(m, {0.0, 0.0});
  for (std::size_t k = 0; k < n_; ++k) {
    const auto x = inverse ? std::conj(data[k]) : data[k];
    a[k] = x * chirp_[k];
  }
  inner_->execute(a, false);
  for (std::size_t k = 0; k < m; ++k) a[k] *= kernel_fft_[k];
  inner_->execute(a, true);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n_; ++k) {
    const auto y = a[k] * inv_m * chirp_[k];
    data[k] = inverse ? std::conj(y) : y;
  }
}

}  // namespace fft

namespace {

using cd = std::complex<double>;

std::int64_t half_width(std::int64_t w) { return w / 2 + 1; }

// [B, H, W] real -> [B, H, W/2+1] half spectrum, normalized by 1/(HW).
void rfft2_kernel(std::int64_t planes, std::int64_t h, std::int64_t w, const std::vector<double>& x,
                  std::vector<double>& re, std::vector<double>& im) {
  const std::int64_t wh = half_width(w);
  const fft::Plan row_plan(static_cast<std::size_t>(w));
  const fft::Plan col_plan(static_cast<std::size_t>(h));
  std::vector<cd> row(static_cast<std::size_t>(w)), col(static_cast<std::size_t>(h));
  std::vector<cd> half(static_cast<std::size_t>(h * wh));
  re.assign(static_cast<std::size_t>(planes * h * wh), 0.0);
  im.assign(re.size(), 0.0);
  const double norm = 1.0 / static_cast<double>(h * w);
  for (std::int64_t p = 0; p < planes; ++p) {
    const double* src = x.data() + p * h * w;
    for (std::int64_t r = 0; r < h; ++r) {
      for (std::int64_t c = 0; c < w; ++c) row[static_cast<std::size_t>(c)] = {src[r * w + c], 0.0};
      row_plan.execute(row, false);
      for (std::int64_t v = 0; v < wh; ++v) half[static_cast<std::size_t>(r * wh + v)] = row[static_cast<std::size_t>(v)];
    }
    for (std::int64_t v = 0; v < wh; ++v) {
      for (std::int64_t r = 0; r < h; ++r) col[static_cast<std::size_t>(r)] = half[static_cast<std::size_t>(r * wh + v)];
      col_plan.execute(col, false);
      for (std::int64_t u = 0; u < h; ++u) {
        const auto k = static_cast<std::size_t>((p * h + u) * wh + v);
        re[k] = col[static_cast<std::size_t>(u)].real() * norm;
        im[k] = col[static_cast<std::size_t>(u)].imag() * norm;
      }
    }
    // Self-conjugate bins of a real signal are real.
    for (std::int64_t u : {std::int64_t{0}, h % 2 == 0 ? h / 2 : std::int64_t{-1}}) {
      if (u < 0) continue;
      for (std::int64_t v : {std::int64_t{0}, w % 2 == 0 ? w / 2 : std::int64_t{-1}}) {
        if (v < 0) continue;
        im[static_cast<std::size_t>((p * h + u) * wh + v)] = 0.0;
      }
    }
  }
}

// [B, H, W/2+1] half spectrum -> [B, H, W] real, unnormalized.
void irfft2_kernel(std::int64_t planes, std::int64_t h, std::int64_t w, const std::vector<double>& re,
                   const std::vector<double>& im, std::vector<double>& x) {
  const std::int64_t wh = half_width(w);
  const fft::Plan row_plan(static_cast<std::size_t>(w));
  const fft::Plan col_plan(static_cast<std::size_t>(h));
  std::vector<cd> row(static_cast<std::size_t>(w)), col(static_cast<std::size_t>(h));
  std::vector<cd> half(static_cast<std::size_t>(h * wh));
  x.assign(static_cast<std::size_t>(planes * h * w), 0.0);
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t v = 0; v < wh; ++v) {
      for (std::int64_t u = 0; u < h; ++u) {
        const auto k = static_cast<std::size_t>((p * h + u) * wh + v);
        col[static_cast<std::size_t>(u)] = {re[k], im[k]};
      }
      col_plan.execute(col, true);
      for (std::int64_t r = 0; r < h; ++r) half[static_cast<std::size_t>(r * wh + v)] = col[static_cast<std::size_t>(r)];
    }
    double* dst = x.data() + p * h * w;
    for (std::int64_t r = 0; r < h; ++r) {
      const cd* y = half.data() + r * wh;
      row[0] = {y[0].real(), 0.0};
      for (std::int64_t v = 1; v <= (w - 1) / 2; ++v) {
        row[static_cast<std::size_t>(v)] = y[v];
        row[static_cast<std::size_t>(w - v)] = std::conj(y[v]);
      }
      if (w % 2 == 0 && w > 1) row[static_cast<std::size_t>(w / 2)] = {y[w / 2].real(), 0.0};
      row_plan.execute(row, true);
      for (std::int64_t c = 0; c < w; ++c) dst[r * w + c] = row[static_cast<std::size_t>(c)].real();
    }
  }
}

// Multiplicity of column v in the Hermitian extension: 1 for DC/Nyquist, else 2.
double column_weight(std::int64_t v, std::int64_t w) { return (v == 0 || (w % 2 == 0 && v == w / 2)) ? 1.0 : 2.0; }

Shape spectrum_shape(const Shape& in) {
  Shape s = in;
  s.back() = half_width(in.back());
  return s;
}

std::int64_t planes_of(const Shape& s) {
  std::int64_t p = 1;
  for (std::size_t i = 0; i + 2 < s.size(); ++i) p *= s[i];
  return p;
}

Tensor from_doubles(const Shape& shape, DType dtype, const std::vector<double>& v) {
  return Tensor::from_values(shape, std::span<const double>(v), dtype);
}

// Gradient of x for an upstream gradient (g_re, g_im) on rfft2(x).
Tensor rfft2_adjoint(const Tensor& g_re, const Tensor& g_im, const Shape& x_shape) {
  const std::int64_t h = x_shape[x_shape.size() - 2], w = x_shape.back(), wh = half_width(w);
  const std::int64_t planes = planes_of(x_shape);
  std::vector<double> re = g_re.to_vector(), im = g_im.to_vector();
  const double norm = 1.0 / static_cast<double>(h * w);
  for (std::size_t k = 0; k < re.size(); ++k) {
    const double c = column_weight(static_cast<std::int64_t>(k) % wh, w);
    re[k] *= norm / c;
    im[k] *= norm / c;
  }
  std::vector<double> x;
  irfft2_kernel(planes, h, w, re, im, x);
  return from_doubles(x_shape, g_re.dtype(), x);
}

Tensor rfft2_part(const Tensor& x, bool imag_part, const Tensor& value) {
  return record(value, imag_part ? "rfft2.imag" : "rfft2.real", {x}, [imag_part, xs = x.shape()](const Tensor& g) {
    Tensor zero = Tensor::zeros(g.shape(), g.dtype());
    return std::vector<Tensor>{imag_part ? rfft2_adjoint(zero, g, xs) : rfft2_adjoint(g, zero, xs)};
  });
}

}  // namespace

ComplexSpectrum rfft2(const Tensor& x) {
  if (x.rank() < 2) {
    throw ShapeError("rfft2: need at least two axes, got " + to_string(x.shape()));
  }
  const std::int64_t h = x.dim(-2), w = x.dim(-1);
  if (h < 1 || w < 1) {
    throw ShapeError("rfft2: empty spatial extent " + to_string(x.shape()));
  }
  std::vector<double> re, im;
  rfft2_kernel(planes_of(x.shape()), h, w, x.to_vector(), re, im);
  const Shape s = spectrum_shape(x.shape());
  ComplexSpectrum out;
  out.real = rfft2_part(x, false, from_doubles(s, x.dtype(), re));
  out.imag = rfft2_part(x, true, from_doubles(s, x.dtype(), im));
  out.original_width = w;
  return out;
}

Tensor irfft2(const ComplexSpectrum& spectrum) { return irfft2(spectrum.real, spectrum.imag, spectrum.original_width); }

Tensor irfft2(const Tensor& real, const Tensor& imag, std::int64_t width) {
  if (real.shape() != imag.shape() || real.rank() < 2) {
    throw ShapeError("irfft2: real " + to_string(real.shape()) + " and imag " + to_string(imag.shape()) +
                     " must match and have at least two axes");
  }
  detail::require_same_dtype("irfft2", real, imag);
  if (width < 1 || half_width(width) != real.dim(-1)) {
    throw ShapeError("irfft2: original width " + std::to_string(width) + " is inconsistent with spectrum " +
                     to_string(real.shape()));
  }
  const std::int64_t h = real.dim(-2);
  Shape xs = real.shape();
  xs.back() = width;
  std::vector<double> x;
  irfft2_kernel(planes_of(xs), h, width, real.to_vector(), imag.to_vector(), x);
  Tensor out = from_doubles(xs, real.dtype(), x);
  return record(out, "irfft2", {real, imag}, [xs, width](const Tensor& g) {
    const std::int64_t h = xs[xs.size() - 2], wh = half_width(width);
    std::vector<double> re, im;
    rfft2_kernel(planes_of(xs), h, width, g.to_vector(), re, im);
    const double hw = static_cast<double>(h * width);
    for (std::size_t k = 0; k < re.size(); ++k) {
      const double c = column_weight(static_cast<std::int64_t>(k) % wh, width) * hw;
      re[k] *= c;
      im[k] *= c;
    }
    const Shape s = spectrum_shape(xs);
    return std::vector<Tensor>{from_doubles(s, g.dtype(), re), from_doubles(s, g.dtype(), im)};
  });
}

}  // namespace air
