// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "air/tensor/checkpoint.hpp"

namespace air::pipeline {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct Moments {
  std::vector<double> m, v;
};

struct TrainState {
  int step = 0;  // optimizer steps taken
  int epoch = 0;
  double base_lr = 1e-4;
  std::vector<double> milestones{0.5, 0.8, 0.9, 0.95};  // fractions of total epochs
  std::uint64_t seed = 0;
  std::map<std::string, Moments> moments;  // keyed by parameter name
};

/// One AdamW update of every parameter in `params` from its accumulated
/// gradient, then clears the gradients. Decay θ ← θ − lr·λ·θ is applied
/// separately from the adaptive step. A parameter that does not require a
/// gradient is a contract error.
void adamw_step(TrainState& state, std::span<const NamedTensor> params, double lr, const AdamWConfig& config = {});

/// base_lr halved once per passed milestone; milestone k sits at epoch
/// fraction_k · total_epochs.
double lr_at(int epoch, double base_lr, int total_epochs, std::span<const double> milestones);
double lr_at(int epoch, double base_lr, int total_epochs);

}  // namespace air::pipeline
