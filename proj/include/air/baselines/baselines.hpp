// SPDX-License-Identifier: Apache-2.0
//
// Reference PETL methods sharing the host's adapter slots: LoRA on the query
// and value projections, and a bottleneck adapter after attention and MLP.
// Both are exact no-ops at initialisation.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "air/tensor/checkpoint.hpp"
#include "air/tensor/tensor.hpp"

namespace air::baselines {

/// W_frozen + (alpha/rank)·B·A, with W out×in, A rank×in and B out×rank.
Tensor lora_apply(const Tensor& w_frozen, const Tensor& a, const Tensor& b, double alpha, int rank);

struct LoRAConfig {
  int embed = 64;
  std::vector<int> ranks{4, 4, 4, 4};  // one entry per host layer
  double alpha = 0.0;                  // 0 selects alpha = rank (scale 1)
  std::uint64_t seed = 0;
  DType dtype = DType::f32;

  void validate() const;
  nlohmann::json to_json() const;
  static LoRAConfig from_json(const nlohmann::json& j);
};

struct LoRALayer {
  int rank = 0;
  double alpha = 0.0;
  Tensor a_q, b_q;  // rank×C, C×rank
  Tensor a_v, b_v;
};

struct LoRAParams {
  LoRAConfig config;
  std::vector<LoRALayer> layers;

  std::vector<NamedTensor> fields() const;
  std::int64_t parameter_count() const;
  void set_requires_grad(bool flag) const;
};

/// A factors fan-in uniform, B factors zero.
LoRAParams init_lora(const LoRAConfig& config);

enum class Activation { gelu, identity };

Activation parse_activation(const std::string& name);
const char* to_string(Activation a);

struct BottleneckConfig {
  int embed = 64;
  /// Hidden width per adapter site; sites run attention-then-MLP per layer,
  /// so there are two per host layer.
  std::vector<int> widths{4, 4, 4, 4, 4, 4, 4, 4};
  Activation activation = Activation::gelu;
  std::uint64_t seed = 0;
  DType dtype = DType::f32;

  void validate() const;
  nlohmann::json to_json() const;
  static BottleneckConfig from_json(const nlohmann::json& j);
};

struct BottleneckSite {
  Tensor down_w, down_b;  // d×C, d
  Tensor up_w, up_b;      // C×d, C
};

struct BottleneckParams {
  BottleneckConfig config;
  std::vector<BottleneckSite> sites;

  std::vector<NamedTensor> fields() const;
  std::int64_t parameter_count() const;
  void set_requires_grad(bool flag) const;
};

/// Down projection fan-in uniform, up projection zero.
BottleneckParams init_bottleneck(const BottleneckConfig& config);

/// x + up(act(down(x))) on tokens x of shape M×C.
Tensor bottleneck_forward(const Tensor& x, const BottleneckSite& site, Activation activation);

/// Per-layer LoRA ranks whose total trainable count is closest to `target`
/// (spread as evenly as possible over `layers`). Throws ConfigError when the
/// closest allocation misses the target by more than `tolerance` (relative).
std::vector<int> lora_ranks_for_budget(std::int64_t target, int embed, int layers, double tolerance = 0.05);
/// Same for bottleneck widths over 2·layers sites.
std::vector<int> bottleneck_widths_for_budget(std::int64_t target, int embed, int layers, double tolerance = 0.05);

/// Trainable count implied by a configuration, from the field shapes.
std::int64_t count_parameters(const LoRAConfig& config);
std::int64_t count_parameters(const BottleneckConfig& config);

Checkpoint to_checkpoint(const LoRAParams& p);
Checkpoint to_checkpoint(const BottleneckParams& p);
LoRAParams lora_from_checkpoint(const Checkpoint& checkpoint);
BottleneckParams bottleneck_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace air::baselines
