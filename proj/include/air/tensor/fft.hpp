// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <memory>
#include <cstdint>
#include <span>
#include <vector>

#include "air/tensor/tensor.hpp"

namespace air {

/// Half spectrum of a real signal over its last two axes. `real` and `imag`
/// have shape [..., H, ⌊W/2⌋+1]; `original_width` W disambiguates the inverse.
struct ComplexSpectrum {
  Tensor real;
  Tensor imag;
  std::int64_t original_width = 0;
};

/// Forward 2-D real FFT over the last two axes with the 1/(H·W) factor on the
/// forward side:
///   X(u,v) = 1/(HW) Σ_{h,w} x(h,w) e^{-2πi(uh/H + vw/W)}.
/// Imaginary parts of self-conjugate bins (u ∈ {0, H/2}, v ∈ {0, W/2}) are
/// exactly zero. Differentiable.
ComplexSpectrum rfft2(const Tensor& x);

/// Unnormalized inverse of rfft2. Only the real part of the DC and Nyquist
/// columns contributes, which makes irfft2 a well-defined real-linear map on
/// any half spectrum. Differentiable in both components.
Tensor irfft2(const ComplexSpectrum& spectrum);
Tensor irfft2(const Tensor& real, const Tensor& imag, std::int64_t width);

namespace fft {

/// Precomputed 1-D complex DFT of a fixed length. Power-of-two lengths use an
/// iterative radix-2 transform; other lengths go through Bluestein's chirp-z
/// reduction onto a power-of-two transform.
class Plan {
 public:
  explicit Plan(std::size_t n);
  std::size_t size() const { return n_; }
  /// Unnormalized in both directions; `inverse` flips the exponent sign.
  void execute(std::span<std::complex<double>> data, bool inverse) const;

 private:
  void radix2(std::complex<double>* data, bool inverse) const;

  std::size_t n_;
  bool pow2_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<double>> twiddle_;  // e^{-2πik/n}, k < n/2
  // Bluestein state.
  std::vector<std::complex<double>> chirp_;     // e^{-πik²/n}
  std::vector<std::complex<double>> kernel_fft_;
  std::unique_ptr<Plan> inner_;
};

}  // namespace fft
}  // namespace air
