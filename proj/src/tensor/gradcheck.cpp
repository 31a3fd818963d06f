// SPDX-License-Identifier: Apache-2.0
#include "air/tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace air {

Tensor finite_diff_grad(const std::function<double()>& f, Tensor& x, double eps) {
  if (!(eps > 0.0)) {
    throw ContractError("finite_diff_grad: eps must be positive");
  }
  NoGradGuard no_grad;
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  dispatch(x.dtype(), [&]<typename T>() {
    auto values = x.mutable_data<T>();
    auto g = out.mutable_data<T>();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T saved = values[i];
      values[i] = static_cast<T>(saved + eps);
      const double up = f();
      values[i] = static_cast<T>(saved - eps);
      const double down = f();
      values[i] = saved;
      g[i] = static_cast<T>((up - down) / (2.0 * eps));
    }
  });
  return out;
}

double max_relative_error(const Tensor& a, const Tensor& b, double floor) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_relative_error: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  const auto va = a.to_vector();
  const auto vb = b.to_vector();
  double worst = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double denom = std::max({std::abs(va[i]), std::abs(vb[i]), floor});
    worst = std::max(worst, std::abs(va[i] - vb[i]) / denom);
  }
  return worst;
}

}  // namespace air
