// SPDX-License-Identifier: Apache-2.0
//
// Toy restoration transformer: a per-task CNN head maps the LQ image to a
// half-resolution feature, the feature is flattened into tokens for a stack
// of pre-norm transformer layers, a skip connection adds the head feature
// back, and a per-task tail upsamples to the HQ resolution.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "air/adaptir/adaptir.hpp"
#include "air/baselines/baselines.hpp"
#include "air/tensor/checkpoint.hpp"
#include "air/tensor/tensor.hpp"

namespace air::host {

enum class Position { mlp, attention };
enum class Form { parallel, sequential };

struct InsertionSpec {
  Position position = Position::mlp;
  Form form = Form::parallel;

  /// "mlp:parallel", "attention:sequential", ...
  static InsertionSpec parse(const std::string& text);
  std::string to_string() const;
  bool operator==(const InsertionSpec&) const = default;
};

struct TaskSlot {
  std::string id;  // degradation spec id, e.g. "sr:2"
  int scale = 1;   // HQ side / LQ side
};

struct HostConfig {
  int embed = 64;
  int layers = 4;
  int heads = 4;
  int mlp_ratio = 4;
  int feature = 16;     // H_f = W_f for the nominal 32×32 input
  int tail_width = 16;  // channels after depth-to-space
  std::vector<TaskSlot> tasks{{"sr:2", 2}, {"noise:25", 1}};
  std::uint64_t seed = 0;
  DType dtype = DType::f32;

  int input_size() const { return 2 * feature; }
  void validate() const;
  nlohmann::json to_json() const;
  static HostConfig from_json(const nlohmann::json& j);
};

struct Head {
  Tensor w1, b1;  // C×3×3×3, stride 1
  Tensor w2, b2;  // C×C×3×3, stride 2
};

struct Tail {
  int factor = 2;  // depth-to-space factor: 2 (head downsampling) × task scale
  Tensor w1, b1;   // (tail_width·factor²)×C×3×3
  Tensor w2, b2;   // 3×tail_width×3×3
};

struct Layer {
  Tensor ln1_g, ln1_b;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;  // C×C, C
  Tensor ln2_g, ln2_b;
  Tensor mlp_w1, mlp_b1;  // (ratio·C)×C
  Tensor mlp_w2, mlp_b2;  // C×(ratio·C)
};

class HostModel {
 public:
  static HostModel init(const HostConfig& config);

  const HostConfig& config() const { return config_; }
  const Head& head(const std::string& task) const;
  const Tail& tail(const std::string& task) const;
  const std::vector<Layer>& layers() const { return layers_; }
  bool has_task(const std::string& task) const;
  /// Registered task whose head and tail serve `task`: the task itself if
  /// registered, else the SR task of the same scale (scale > 1) or the first
  /// scale-1 task. Throws LookupError if none fits.
  std::string route(const std::string& task, int scale) const;

  /// Heads in task order, then layers, then tails.
  std::vector<NamedTensor> fields() const;
  std::int64_t parameter_count() const;
  /// SHA-256 over the f32 byte image of fields().
  std::string checksum() const;

  void set_trainable(bool flag) const;
  bool frozen() const { return frozen_; }
  void mark_frozen() { frozen_ = true; }

  Checkpoint to_checkpoint() const;
  static HostModel from_checkpoint(const Checkpoint& checkpoint);

 private:
  HostConfig config_;
  std::vector<Head> heads_;
  std::vector<Layer> layers_;
  std::vector<Tail> tails_;
  bool frozen_ = false;

  std::size_t task_index(const std::string& task) const;
};

/// Stops gradients into every host parameter and marks the model frozen.
void freeze(HostModel& model);

/// Trainable state attached to a host: nothing, one AdaptIR per layer, LoRA
/// on the query/value projections, or bottleneck adapters after attention
/// and MLP.
struct Adapter {
  enum class Kind { none, adaptir, lora, bottleneck };

  Kind kind = Kind::none;
  InsertionSpec insertion;  // AdaptIR only
  std::vector<adaptir::AdaptIRParams> adaptir;
  baselines::LoRAParams lora;
  baselines::BottleneckParams bottleneck;

  static Adapter none();
  /// Layer l uses `config` with its seed replaced by a per-layer substream.
  static Adapter make_adaptir(const HostConfig& host, adaptir::AdaptIRConfig config, InsertionSpec insertion = {});
  static Adapter make_lora(const HostConfig& host, baselines::LoRAConfig config);
  static Adapter make_bottleneck(const HostConfig& host, baselines::BottleneckConfig config);

  std::vector<NamedTensor> fields() const;
  std::int64_t parameter_count() const;
  void set_requires_grad(bool flag) const;

  Checkpoint to_checkpoint() const;
  static Adapter from_checkpoint(const Checkpoint& checkpoint);
};

const char* to_string(Adapter::Kind kind);
Adapter::Kind parse_adapter_kind(const std::string& name);

/// N×3×H×W LQ image (H, W even) → N×3×(H·s)×(W·s).
Tensor host_forward(const Tensor& img, const std::string& task, const HostModel& model,
                    const Adapter* adapter = nullptr);

/// One transformer layer on tokens of shape (N·h·w)×C, including the
/// adapter wiring for `layer_index`.
Tensor layer_forward(const Tensor& tokens, const Layer& layer, const HostConfig& config, int n, int h, int w,
                     const Adapter* adapter = nullptr, int layer_index = 0);

/// Exactly the adapter's parameters (empty without an adapter).
std::vector<NamedTensor> trainable_parameters(const HostModel& model, const Adapter* adapter);

/// (N·h·w)×C tokens ↔ N×C×h×w maps.
Tensor tokens_to_map(const Tensor& tokens, int n, int h, int w);
Tensor map_to_tokens(const Tensor& map);

}  // namespace air::host
