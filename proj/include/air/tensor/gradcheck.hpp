// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "air/tensor/tensor.hpp"

namespace air {

/// Central-difference gradient of the scalar function `f` at the leaf `x`:
/// (f(x + εe_i) − f(x − εe_i)) / 2ε per element. `x` is perturbed in place and
/// restored; `f` must read the current values of `x`.
Tensor finite_diff_grad(const std::function<double()>& f, Tensor& x, double eps);

/// Largest elementwise |a − b| / max(|a|, |b|, floor).
double max_relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8);

}  // namespace air
