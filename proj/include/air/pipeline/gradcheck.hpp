// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace air::pipeline {

struct GradcheckOptions {
  int batch = 2;
  int channels = 8;
  int size = 8;  // H = W
  double eps = 1e-5;
  double floor = 1e-6;  // denominator floor of the relative error
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  /// Test fixture: values other than 1 scale the gradient flowing back out of
  /// the FAM branch (the forward pass is unchanged), which a correct check
  /// must flag.
  double fam_grad_factor = 1.0;
};

struct GradcheckRow {
  std::string group;  // parameter field name, or "input"
  double rel_err = 0.0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;
  int draw = 0;                // index of the accepted random instance
  double min_amplitude = 0.0;  // smallest spectral amplitude of the intrinsic feature
  double min_residual = 0.0;   // smallest |output - target|
  bool passed() const;
};

/// Autodiff vs central differences for every field of a fixed-seed f64
/// AdaptIR instance with randomized values, under an L1 loss against a
/// random target.
///
/// Central differences are only meaningful where the objective is smooth
/// across the ±ε step. The FAM phase is singular at zero amplitude and L1 at
/// zero residual, so instances are redrawn until every spectral amplitude is
/// at least 100ε and every residual at least 10ε.
GradcheckReport gradcheck_adaptir(const GradcheckOptions& options = {});

}  // namespace air::pipeline
