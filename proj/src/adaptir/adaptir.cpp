// SPDX-License-Identifier: Apache-2.0
#include "air/adaptir/adaptir.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "air/common/rng.hpp"
#include "air/tensor/fft.hpp"
#include "air/tensor/ops.hpp"

namespace air::adaptir {
namespace {

enum class Branch { shared, lim, fam, csm };

enum class Init { fan_in, zero, one, identity };

struct FieldSpec {
  std::string name;
  Shape shape;
  Branch branch;
  Init rule;
  std::int64_t fan_in;
};

std::vector<FieldSpec> field_specs(const AdaptIRConfig& cfg) {
  const std::int64_t C = cfg.channels, c = cfg.intrinsic(), h = cfg.hidden(), k = cfg.kernel, r = cfg.lim_rank;
  const std::int64_t cin_g = cfg.lim_depthwise ? 1 : c;
  std::vector<FieldSpec> specs;
  specs.push_back({"down_w", {c, C, 1, 1}, Branch::shared, Init::fan_in, C});
  specs.push_back({"down_b", {c}, Branch::shared, Init::zero, 1});
  if (cfg.lim_low_rank) {
    specs.push_back({"lim_U", {c, r}, Branch::lim, Init::fan_in, r});
    specs.push_back({"lim_V", {cin_g * k * k, r}, Branch::lim, Init::fan_in, r});
  } else {
    specs.push_back({"lim_kernel", {c, cin_g, k, k}, Branch::lim, Init::fan_in, cin_g * k * k});
  }
  const Shape affine = cfg.fam_depthwise ? Shape{c} : Shape{c, c};
  const Init affine_init = cfg.fam_depthwise ? Init::one : Init::identity;
  const std::int64_t affine_fan = cfg.fam_depthwise ? 1 : c;
  specs.push_back({"fam_mag_w", affine, Branch::fam, affine_init, affine_fan});
  specs.push_back({"fam_mag_b", {c}, Branch::fam, Init::zero, 1});
  specs.push_back({"fam_pha_w", affine, Branch::fam, affine_init, affine_fan});
  specs.push_back({"fam_pha_b", {c}, Branch::fam, Init::zero, 1});
  specs.push_back({"fam_scale_w", affine, Branch::fam, Init::fan_in, affine_fan});
  specs.push_back({"fam_scale_b", {c}, Branch::fam, Init::zero, 1});
  specs.push_back({"csm_mask_w", {1, c, 1, 1}, Branch::csm, Init::fan_in, c});
  specs.push_back({"csm_mask_b", {1}, Branch::csm, Init::zero, 1});
  specs.push_back({"csm_ffn_w1", {h, c}, Branch::csm, Init::fan_in, c});
  specs.push_back({"csm_ffn_b1", {h}, Branch::csm, Init::zero, 1});
  specs.push_back({"csm_ffn_w2", {c, h}, Branch::csm, Init::fan_in, h});
  specs.push_back({"csm_ffn_b2", {c}, Branch::csm, Init::zero, 1});
  specs.push_back({"up_w", {C, c, 1, 1}, Branch::shared, Init::zero, c});
  specs.push_back({"up_b", {C}, Branch::shared, Init::zero, 1});
  return specs;
}

bool enabled(const BranchMask& mask, Branch b) {
  switch (b) {
    case Branch::lim:
      return mask.lim;
    case Branch::fam:
      return mask.fam;
    case Branch::csm:
      return mask.csm;
    case Branch::shared:
      break;
  }
  return true;
}

// Slot of each named field inside AdaptIRParams.
Tensor& slot(AdaptIRParams& p, const std::string& name) {
  static const std::pair<const char*, Tensor AdaptIRParams::*> table[] = {
      {"down_w", &AdaptIRParams::down_w},           {"down_b", &AdaptIRParams::down_b},
      {"lim_U", &AdaptIRParams::lim_u},             {"lim_V", &AdaptIRParams::lim_v},
      {"lim_kernel", &AdaptIRParams::lim_kernel},   {"fam_mag_w", &AdaptIRParams::fam_mag_w},
      {"fam_mag_b", &AdaptIRParams::fam_mag_b},     {"fam_pha_w", &AdaptIRParams::fam_pha_w},
      {"fam_pha_b", &AdaptIRParams::fam_pha_b},     {"fam_scale_w", &AdaptIRParams::fam_scale_w},
      {"fam_scale_b", &AdaptIRParams::fam_scale_b}, {"csm_mask_w", &AdaptIRParams::csm_mask_w},
      {"csm_mask_b", &AdaptIRParams::csm_mask_b},   {"csm_ffn_w1", &AdaptIRParams::csm_ffn_w1},
      {"csm_ffn_b1", &AdaptIRParams::csm_ffn_b1},   {"csm_ffn_w2", &AdaptIRParams::csm_ffn_w2},
      {"csm_ffn_b2", &AdaptIRParams::csm_ffn_b2},   {"up_w", &AdaptIRParams::up_w},
      {"up_b", &AdaptIRParams::up_b},
  };
  for (const auto& [n, member] : table) {
    if (name == n) return p.*member;
  }
  throw LookupError("adaptir: unknown field '" + name + "'");
}

const Tensor& slot(const AdaptIRParams& p, const std::string& name) {
  return slot(const_cast<AdaptIRParams&>(p), name);
}

void require_channels(const char* op, const Tensor& x, std::int64_t channels) {
  if (x.rank() != 4 || x.dim(1) != channels) {
    throw ShapeError(std::string(op) + ": expected N×" + std::to_string(channels) + "×H×W input, got " +
                     to_string(x.shape()));
  }
}

// Per-channel (depthwise) or channel-mixing 1×1 affine map on an N×c×H×W map.
Tensor channel_affine(const Tensor& x, const Tensor& w, const Tensor& b, bool depthwise) {
  const std::int64_t c = b.dim(0);
  if (depthwise) {
    return add(mul(x, reshape(w, {1, c, 1, 1})), reshape(b, {1, c, 1, 1}));
  }
  return conv2d(x, reshape(w, {c, c, 1, 1}), b);
}

}  // namespace

void AdaptIRConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("adaptir config: " + what); };
  if (channels < 1) fail("channels must be positive, got " + std::to_string(channels));
  if (reduction < 1) fail("reduction must be positive, got " + std::to_string(reduction));
  if (channels % reduction != 0) {
    fail("reduction " + std::to_string(reduction) + " must divide channels " + std::to_string(channels));
  }
  if (kernel < 1 || kernel % 2 == 0) fail("kernel must be a positive odd size, got " + std::to_string(kernel));
  if (lim_low_rank) {
    const std::int64_t cols = static_cast<std::int64_t>(lim_depthwise ? 1 : intrinsic()) * kernel * kernel;
    const std::int64_t cap = std::min<std::int64_t>(intrinsic(), cols);
    if (lim_rank < 1 || lim_rank > cap) {
      fail("lim_rank must lie in [1, " + std::to_string(cap) + "], got " + std::to_string(lim_rank));
    }
  }
  if (ffn_hidden < 0) fail("ffn_hidden must be non-negative, got " + std::to_string(ffn_hidden));
  if (!branches.any()) fail("at least one branch must be enabled");
}

nlohmann::json AdaptIRConfig::to_json() const {
  return {{"channels", channels},
          {"reduction", reduction},
          {"lim_rank", lim_rank},
          {"kernel", kernel},
          {"ffn_hidden", hidden()},
          {"seed", seed},
          {"dtype", to_string(dtype)},
          {"lim_low_rank", lim_low_rank},
          {"lim_depthwise", lim_depthwise},
          {"fam_depthwise", fam_depthwise},
          {"branches", {{"lim", branches.lim}, {"fam", branches.fam}, {"csm", branches.csm}}}};
}

AdaptIRConfig AdaptIRConfig::from_json(const nlohmann::json& j) {
  AdaptIRConfig cfg;
  try {
    cfg.channels = j.at("channels").get<int>();
    cfg.reduction = j.at("reduction").get<int>();
    cfg.lim_rank = j.at("lim_rank").get<int>();
    cfg.kernel = j.value("kernel", 3);
    cfg.ffn_hidden = j.value("ffn_hidden", 0);
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.dtype = j.value("dtype", std::string("f32")) == "f64" ? DType::f64 : DType::f32;
    cfg.lim_low_rank = j.value("lim_low_rank", true);
    cfg.lim_depthwise = j.value("lim_depthwise", true);
    cfg.fam_depthwise = j.value("fam_depthwise", true);
    if (j.contains("branches")) {
      const auto& b = j.at("branches");
      cfg.branches = {b.value("lim", true), b.value("fam", true), b.value("csm", true)};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("adaptir config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::vector<NamedTensor> AdaptIRParams::fields() const {
  std::vector<NamedTensor> out;
  for (const auto& spec : field_specs(config)) {
    if (enabled(config.branches, spec.branch)) out.push_back({spec.name, slot(*this, spec.name)});
  }
  return out;
}

std::int64_t AdaptIRParams::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& f : fields()) total += f.tensor.numel();
  return total;
}

void AdaptIRParams::set_requires_grad(bool flag) const {
  for (auto& f : fields()) f.tensor.set_requires_grad(flag);
}

std::int64_t count_parameters(const AdaptIRConfig& config) {
  config.validate();
  std::int64_t total = 0;
  for (const auto& spec : field_specs(config)) {
    if (enabled(config.branches, spec.branch)) total += numel(spec.shape);
  }
  return total;
}

AdaptIRParams init(const AdaptIRConfig& config) {
  config.validate();
  AdaptIRParams p;
  p.config = config;
  Rng rng(config.seed, "adaptir.init");
  // Every field is drawn regardless of the branch mask so that masked
  // variants of one seed share their remaining values.
  for (const auto& spec : field_specs(config)) {
    std::vector<double> v(static_cast<std::size_t>(numel(spec.shape)), 0.0);
    switch (spec.rule) {
      case Init::fan_in: {
        const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
        for (auto& x : v) x = rng.uniform(-bound, bound);
        break;
      }
      case Init::one:
        std::fill(v.begin(), v.end(), 1.0);
        break;
      case Init::identity: {
        const std::int64_t n = spec.shape[0];
        for (std::int64_t i = 0; i < n; ++i) v[static_cast<std::size_t>(i * n + i)] = 1.0;
        break;
      }
      case Init::zero:
        break;
    }
    slot(p, spec.name) = Tensor::from_values(spec.shape, v, config.dtype);
  }
  return p;
}

Tensor down_project(const Tensor& x, const AdaptIRParams& p) {
  require_channels("adaptir.down_project", x, p.config.channels);
  return conv2d(x, p.down_w, p.down_b);
}

Tensor compose_kernel(const AdaptIRParams& p) {
  const std::int64_t c = p.config.intrinsic(), k = p.config.kernel;
  const std::int64_t cin_g = p.config.lim_depthwise ? 1 : c;
  if (!p.config.lim_low_rank) return p.lim_kernel;
  return reshape(matmul(p.lim_u, transpose(p.lim_v)), {c, cin_g, k, k});
}

Tensor lim_forward(const Tensor& x_intrin, const AdaptIRParams& p) {
  const int c = p.config.intrinsic();
  require_channels("adaptir.lim_forward", x_intrin, c);
  return conv2d(x_intrin, compose_kernel(p), std::nullopt, {.stride = 1, .groups = p.config.lim_depthwise ? c : 1});
}

Tensor fam_pre_scale(const Tensor& x_intrin, const AdaptIRParams& p) {
  require_channels("adaptir.fam_forward", x_intrin, p.config.intrinsic());
  const bool dw = p.config.fam_depthwise;
  const ComplexSpectrum spec = rfft2(x_intrin);
  const Tensor mag = channel_affine(magnitude(spec.real, spec.imag), p.fam_mag_w, p.fam_mag_b, dw);
  const Tensor pha = channel_affine(phase(spec.real, spec.imag), p.fam_pha_w, p.fam_pha_b, dw);
  return irfft2(mul(mag, cos(pha)), mul(mag, sin(pha)), x_intrin.dim(3));
}

Tensor fam_forward(const Tensor& x_intrin, const AdaptIRParams& p) {
  return channel_affine(fam_pre_scale(x_intrin, p), p.fam_scale_w, p.fam_scale_b, p.config.fam_depthwise);
}

Tensor csm_forward(const Tensor& x_intrin, const AdaptIRParams& p) {
  const std::int64_t c = p.config.intrinsic();
  require_channels("adaptir.csm_forward", x_intrin, c);
  const std::int64_t n = x_intrin.dim(0), hw = x_intrin.dim(2) * x_intrin.dim(3);
  const Tensor mask = softmax_spatial(conv2d(x_intrin, p.csm_mask_w, p.csm_mask_b));
  const Tensor pooled = bmm(reshape(x_intrin, {n, c, hw}), reshape(mask, {n, hw, 1}));
  const Tensor hidden = gelu(linear(reshape(pooled, {n, c}), p.csm_ffn_w1, p.csm_ffn_b1));
  return reshape(linear(hidden, p.csm_ffn_w2, p.csm_ffn_b2), {n, c, 1, 1});
}

Tensor ensemble(const Tensor& x_intrin, const AdaptIRParams& p) {
  const BranchMask& m = p.config.branches;
  if (!m.any()) throw ConfigError("adaptir: all branches are disabled");
  Tensor acc;
  auto accumulate = [&](const Tensor& t) { acc = acc.defined() ? add(acc, t) : t; };
  if (m.lim) accumulate(lim_forward(x_intrin, p));
  if (m.fam) accumulate(fam_forward(x_intrin, p));
  if (m.csm) {
    const Tensor shift = csm_forward(x_intrin, p);
    accumulate(acc.defined() ? shift : broadcast_to(shift, x_intrin.shape()));
  }
  return acc;
}

Tensor forward(const Tensor& x, const AdaptIRParams& p) {
  return conv2d(ensemble(down_project(x, p), p), p.up_w, p.up_b);
}

AdaptIRParams branch_mask(const AdaptIRParams& p, bool enable_lim, bool enable_fam, bool enable_csm) {
  if (!(enable_lim || enable_fam || enable_csm)) {
    throw ConfigError("adaptir.branch_mask: at least one branch must be enabled");
  }
  AdaptIRParams out = p;
  out.config.branches = {enable_lim, enable_fam, enable_csm};
  return out;
}

Checkpoint to_checkpoint(const AdaptIRParams& p) { return {"adaptir", p.config.to_json(), p.fields()}; }

AdaptIRParams from_checkpoint(const Checkpoint& checkpoint) {
  if (checkpoint.kind != "adaptir") {
    throw ParseError("adaptir checkpoint: unexpected kind '" + checkpoint.kind + "'");
  }
  AdaptIRConfig cfg = AdaptIRConfig::from_json(checkpoint.config);
  // Masked-out branches are absent from the file; their slots get fresh
  // init values so the params stay structurally complete.
  AdaptIRParams p = init(cfg);
  for (const auto& spec : field_specs(cfg)) {
    if (!enabled(cfg.branches, spec.branch)) continue;
    const Tensor& t = checkpoint.field(spec.name);
    if (t.shape() != spec.shape) {
      throw ParseError("adaptir checkpoint: field " + spec.name + " has shape " + to_string(t.shape()) +
                       ", expected " + to_string(spec.shape));
    }
    slot(p, spec.name) = t.to(cfg.dtype);
  }
  return p;
}

}  // namespace air::adaptir
