// SPDX-License-Identifier: Apache-2.0
//
// AdaptIR: a parameter-efficient adapter for frozen restoration transformers.
//
// The input feature X (N×C×H×W) is projected by a 1×1 convolution into an
// intrinsic space of C/γ channels. Three branches then work on the intrinsic
// feature in parallel:
//
//   LIM  local spatial prior: a depthwise K×K convolution whose kernel matrix
//        is the low-rank product U·Vᵀ.
//   FAM  global spatial prior: per-channel affine maps on the amplitude and
//        phase of the 2-D spectrum, an inverse FFT, then a per-channel scale.
//   CSM  channel interaction: a spatial-softmax mask pools each channel to a
//        scalar; a two-layer FFN turns that vector into per-channel shifts.
//
// The branch outputs are summed (the CSM vector broadcasts over H×W) and a
// zero-initialised 1×1 convolution lifts the sum back to C channels, so a
// fresh adapter emits exact zeros.
#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "air/tensor/checkpoint.hpp"
#include "air/tensor/tensor.hpp"

namespace air::adaptir {

struct BranchMask {
  bool lim = true;
  bool fam = true;
  bool csm = true;

  bool any() const { return lim || fam || csm; }
  bool operator==(const BranchMask&) const = default;
};

struct AdaptIRConfig {
  int channels = 64;    // C
  int reduction = 8;    // γ
  int lim_rank = 4;     // r
  int kernel = 3;       // K
  int ffn_hidden = 0;   // h; 0 selects C/γ
  std::uint64_t seed = 0;
  DType dtype = DType::f32;

  // Structural variants used by the efficiency ablation.
  bool lim_low_rank = true;   // false: the LIM kernel is a free tensor
  bool lim_depthwise = true;  // false: LIM mixes channels (groups = 1)
  bool fam_depthwise = true;  // false: φ1, φ2 and the scale layer mix channels
  BranchMask branches;

  int intrinsic() const { return channels / reduction; }
  int hidden() const { return ffn_hidden > 0 ? ffn_hidden : intrinsic(); }
  /// Throws ConfigError naming the first violated constraint.
  void validate() const;

  nlohmann::json to_json() const;
  static AdaptIRConfig from_json(const nlohmann::json& j);
};

/// All trainable values of one adapter. Weight layouts follow conv2d
/// (Cout×Cin/groups×K×K) and linear (out×in).
struct AdaptIRParams {
  AdaptIRConfig config;

  Tensor down_w, down_b;            // c×C×1×1, c
  Tensor lim_u, lim_v;              // c×r, (cin_g·K²)×r   (low-rank LIM)
  Tensor lim_kernel;                // c×cin_g×K×K          (full LIM)
  Tensor fam_mag_w, fam_mag_b;      // φ1: c or c×c, c
  Tensor fam_pha_w, fam_pha_b;      // φ2
  Tensor fam_scale_w, fam_scale_b;  // scale layer
  Tensor csm_mask_w, csm_mask_b;    // 1×c×1×1, 1
  Tensor csm_ffn_w1, csm_ffn_b1;    // h×c, h
  Tensor csm_ffn_w2, csm_ffn_b2;    // c×h, c
  Tensor up_w, up_b;                // C×c×1×1, C

  /// Trainable fields of the enabled branches, in serialization order.
  std::vector<NamedTensor> fields() const;
  std::int64_t parameter_count() const;
  void set_requires_grad(bool flag) const;
};

AdaptIRParams init(const AdaptIRConfig& config);

/// X_intrin: 1×1 projection into C/γ channels.
Tensor down_project(const Tensor& x, const AdaptIRParams& p);
/// LIM kernel: Reshape(U·Vᵀ) (or the free kernel), shape c×cin_g×K×K.
Tensor compose_kernel(const AdaptIRParams& p);
Tensor lim_forward(const Tensor& x_intrin, const AdaptIRParams& p);
/// FAM up to, but excluding, the output scale layer.
Tensor fam_pre_scale(const Tensor& x_intrin, const AdaptIRParams& p);
Tensor fam_forward(const Tensor& x_intrin, const AdaptIRParams& p);
/// Channel shift vector, N×c×1×1.
Tensor csm_forward(const Tensor& x_intrin, const AdaptIRParams& p);
/// Sum of the enabled branches in the intrinsic space, N×c×H×W.
Tensor ensemble(const Tensor& x_intrin, const AdaptIRParams& p);
/// X_adapt, N×C×H×W. The caller adds it to the sublayer it adapts.
Tensor forward(const Tensor& x, const AdaptIRParams& p);

/// Same tensors with a different set of active branches. Disabled branches
/// contribute nothing and drop out of fields() and parameter_count().
AdaptIRParams branch_mask(const AdaptIRParams& p, bool enable_lim, bool enable_fam, bool enable_csm);

/// Independent count of trainable scalars implied by a configuration:
/// sum over the fields it would allocate of the product of their extents.
std::int64_t count_parameters(const AdaptIRConfig& config);

Checkpoint to_checkpoint(const AdaptIRParams& p);
AdaptIRParams from_checkpoint(const Checkpoint& checkpoint);

}  // namespace air::adaptir
