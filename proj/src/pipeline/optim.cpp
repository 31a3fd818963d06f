// SPDX-License-Identifier: Apache-2.0
#include "air/pipeline/optim.hpp"

#include <cmath>

namespace air::pipeline {

void adamw_step(TrainState& state, std::span<const NamedTensor> params, double lr, const AdamWConfig& config) {
  ++state.step;
  const double c1 = 1.0 - std::pow(config.beta1, state.step);
  const double c2 = 1.0 - std::pow(config.beta2, state.step);
  for (const auto& p : params) {
    Tensor t = p.tensor;
    if (!t.requires_grad()) {
      throw ContractError("adamw_step: parameter " + p.name + " is not trainable");
    }
    const std::vector<double> g = t.grad().to_vector();
    Moments& mo = state.moments[p.name];
    if (mo.m.empty()) {
      mo.m.assign(g.size(), 0.0);
      mo.v.assign(g.size(), 0.0);
    }
    dispatch(t.dtype(), [&]<typename T>() {
      auto theta = t.mutable_data<T>();
      for (std::size_t i = 0; i < g.size(); ++i) {
        mo.m[i] = config.beta1 * mo.m[i] + (1 - config.beta1) * g[i];
        mo.v[i] = config.beta2 * mo.v[i] + (1 - config.beta2) * g[i] * g[i];
        const double mhat = mo.m[i] / c1;
        const double vhat = mo.v[i] / c2;
        double x = static_cast<double>(theta[i]);
        x -= lr * config.weight_decay * x;
        x -= lr * mhat / (std::sqrt(vhat) + config.eps);
        theta[i] = static_cast<T>(x);
      }
    });
    t.zero_grad();
  }
}

double lr_at(int epoch, double base_lr, int total_epochs, std::span<const double> milestones) {
  if (total_epochs < 1 || epoch < 0 || epoch >= total_epochs) {
    throw ContractError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(total_epochs) + ")");
  }
  int passed = 0;
  for (double f : milestones) {
    // Milestone epochs are rounded up; the slack keeps 0.95·500 at 475.
    if (epoch >= std::ceil(f * total_epochs - 1e-9)) ++passed;
  }
  return std::ldexp(base_lr, -passed);
}

double lr_at(int epoch, double base_lr, int total_epochs) {
  static constexpr double defaults[] = {0.5, 0.8, 0.9, 0.95};
  return lr_at(epoch, base_lr, total_epochs, defaults);
}

}  // namespace air::pipeline
