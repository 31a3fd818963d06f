// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>

#include "air/tensor/tensor.hpp"

namespace air {

// Elementwise. Binary ops broadcast numpy-style: shapes are right-aligned and
// each pair of extents must be equal or one of them 1. A C×1×1 vector thus
// broadcasts against C×H×W, and a 1×C×1×1 one against N×C×H×W.

Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Hadamard product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
Tensor neg(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor sin(const Tensor& a);
/// x·Φ(x) with the exact error-function form.
Tensor gelu(const Tensor& a);
/// |re + i·im|.
Tensor magnitude(const Tensor& re, const Tensor& im);
/// atan2(im, re), with atan2(0, 0) = 0 and a zero gradient at the origin.
Tensor phase(const Tensor& re, const Tensor& im);
/// Identity forward; multiplies the incoming gradient by `factor`.
Tensor scale_grad(const Tensor& a, double factor);

// Reductions and layout.

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sums over the axes where `shape` (right-aligned, same rank or lower) has
/// extent 1 and `a` does not. Inverse of broadcast_to.
Tensor sum_to(const Tensor& a, const Shape& shape);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor permute(const Tensor& a, const std::vector<int>& dims);
Tensor transpose(const Tensor& a);  // 2-D

// Linear algebra.

/// a[M×K] · b[K×N].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched product of 3-D tensors, with optional transposition of the last
/// two axes of either operand.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false);
/// x[M×K] · w[N×K]ᵀ + bias[N].
Tensor linear(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias = std::nullopt);

// Neural-network primitives.

struct Conv2dOptions {
  int stride = 1;
  int groups = 1;
};

/// Cross-correlation with zero "same" padding of (K-1)/2. `weight` is
/// Cout×(Cin/groups)×K×K; K must be odd.
Tensor conv2d(const Tensor& x, const Tensor& weight, const std::optional<Tensor>& bias = std::nullopt,
              Conv2dOptions options = {});

/// N×(C·f²)×H×W → N×C×(H·f)×(W·f); channel c·f² + i·f + j lands at offset (i, j).
Tensor depth_to_space(const Tensor& x, int factor);

/// Softmax over the last axis.
Tensor softmax(const Tensor& x);
/// Softmax over all H·W positions of an N×1×H×W tensor, per sample.
Tensor softmax_spatial(const Tensor& x);

/// Normalizes over the last axis, then applies gamma/beta (shape [last]).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Mean absolute difference; the gradient is sign(pred - target)/numel.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

}  // namespace air
