// SPDX-License-Identifier: Apache-2.0
#include "air/pipeline/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "air/adaptir/adaptir.hpp"
#include "air/common/rng.hpp"
#include "air/tensor/fft.hpp"
#include "air/tensor/gradcheck.hpp"
#include "air/tensor/ops.hpp"

namespace air::pipeline {
namespace {

Tensor uniform(const Shape& shape, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (auto& x : v) x = rng.uniform(-0.5, 0.5);
  return Tensor::from_values(shape, v, DType::f64);
}

// Branch-by-branch forward with the FAM gradient rescaled.
Tensor faulty_forward(const Tensor& x, const adaptir::AdaptIRParams& p, double factor) {
  const Tensor xi = adaptir::down_project(x, p);
  const Tensor lim = adaptir::lim_forward(xi, p);
  const Tensor fam = scale_grad(adaptir::fam_forward(xi, p), factor);
  const Tensor csm = adaptir::csm_forward(xi, p);
  return conv2d(add(add(lim, fam), csm), p.up_w, p.up_b);
}

}  // namespace

bool GradcheckReport::passed() const {
  for (const auto& r : rows)
    if (!r.pass) return false;
  return !rows.empty();
}

GradcheckReport gradcheck_adaptir(const GradcheckOptions& o) {
  adaptir::AdaptIRConfig cfg;
  cfg.channels = o.channels;
  cfg.reduction = 2;
  cfg.lim_rank = 2;
  cfg.dtype = DType::f64;
  cfg.seed = derive_seed(o.seed, "gradcheck.init");
  const adaptir::AdaptIRParams p = adaptir::init(cfg);

  GradcheckReport report;
  Tensor x, target;
  for (report.draw = 0;; ++report.draw) {
    if (report.draw == 64) throw ContractError("gradcheck: no well-conditioned instance in 64 draws");
    // Random values everywhere; the zero up-projection would hide every upstream gradient.
    Rng rng(o.seed, "gradcheck.values", static_cast<std::uint64_t>(report.draw));
    for (const auto& f : p.fields()) {
      Tensor t = f.tensor;
      const Tensor r = uniform(t.shape(), rng);
      std::copy(r.data<double>().begin(), r.data<double>().end(), t.mutable_data<double>().begin());
    }
    x = uniform({o.batch, o.channels, o.size, o.size}, rng);
    target = uniform(x.shape(), rng);
    const ComplexSpectrum sp = rfft2(adaptir::down_project(x, p));
    const auto re = sp.real.to_vector(), im = sp.imag.to_vector();
    report.min_amplitude = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < re.size(); ++i) report.min_amplitude = std::min(report.min_amplitude, std::hypot(re[i], im[i]));
    const auto y = adaptir::forward(x, p).to_vector(), t = target.to_vector();
    report.min_residual = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < y.size(); ++i) report.min_residual = std::min(report.min_residual, std::abs(y[i] - t[i]));
    if (report.min_amplitude >= 100 * o.eps && report.min_residual >= 10 * o.eps) break;
  }

  auto objective = [&] {
    const Tensor y = o.fam_grad_factor == 1.0 ? adaptir::forward(x, p) : faulty_forward(x, p, o.fam_grad_factor);
    return l1_loss(y, target);
  };

  p.set_requires_grad(true);
  x.set_requires_grad(true);
  objective().backward();

  auto check = [&](const std::string& name, Tensor leaf) {
    const Tensor fd = finite_diff_grad([&] { return objective().item(); }, leaf, o.eps);
    GradcheckRow row{name, max_relative_error(leaf.grad(), fd, o.floor), false};
    row.pass = row.rel_err <= o.tolerance;
    report.rows.push_back(row);
  };
  for (const auto& f : p.fields()) check(f.name, f.tensor);
  check("input", x);
  p.set_requires_grad(false);
  return report;
}

}  // namespace air::pipeline
