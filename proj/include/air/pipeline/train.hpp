// SPDX-License-Identifier: Apache-2.0
//
// Multi-task pretraining of the host, adapter fine-tuning on a frozen host,
// and held-out evaluation.
#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "air/data/dataset.hpp"
#include "air/host/host.hpp"
#include "air/pipeline/metrics.hpp"
#include "air/pipeline/optim.hpp"

namespace air::pipeline {

struct MetricReport {
  std::string label;  // free-form row name ("before", "after", ablation setting)
  std::string task;
  std::string method;
  double psnr = 0.0;
  double ssim = 0.0;
  std::int64_t trainable_params = 0;
  std::int64_t total_params = 0;
  int steps = 0;
  double wall_time = 0.0;  // seconds; kept out of CSV so reports stay byte-stable
};

/// Fixed column order: label,task,method,psnr,ssim,trainable_params,total_params,steps
std::string csv_header();
std::string csv_row(const MetricReport& r);
void write_csv(std::ostream& out, const std::vector<MetricReport>& rows);
/// Aligned text table including wall time.
std::string format_table(const std::vector<MetricReport>& rows);

/// Data and loop settings shared by both training stages.
struct DataConfig {
  int corpus_size = 64;
  int image_size = 96;
  int crop = 32;  // LQ side
  int batch = 8;
  int heldout = 16;
};

struct PretrainConfig {
  int epochs = 40;
  double lr = 2e-3;
  AdamWConfig adamw;
  DataConfig data;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  host::HostModel model;             // frozen
  std::vector<double> epoch_loss;    // mean training L1 per epoch
};

/// Progress callback: (epoch, mean loss of the epoch, lr).
using EpochHook = std::function<void(int, double, double)>;

/// Trains every host parameter on a round-robin mixture of the host's tasks:
/// step k of an epoch uses task k mod T. Freezes the model before returning.
PretrainResult pretrain(const host::HostConfig& config, const PretrainConfig& train, const EpochHook& hook = {});

enum class Method { adaptir, lora, bottleneck };
const char* to_string(Method m);
Method parse_method(const std::string& name);

struct FinetuneConfig {
  Method method = Method::adaptir;
  std::string task = "second_order:2:25";
  int epochs = 25;
  double lr = 5e-3;
  AdamWConfig adamw;
  DataConfig data;
  /// AdaptIR layout; channels and seed are filled in from the host and run.
  adaptir::AdaptIRConfig adaptir;
  host::InsertionSpec insertion;
  std::uint64_t seed = 0;
};

struct FinetuneResult {
  host::Adapter adapter;
  MetricReport before;  // frozen host alone
  MetricReport after;   // frozen host + trained adapter
  std::string checksum_before, checksum_after;
  std::vector<double> epoch_loss;
};

/// Adapter for `method` on `host`. LoRA and bottleneck budgets are equalized
/// to the AdaptIR count of the same configuration.
host::Adapter make_adapter(const host::HostModel& host, const FinetuneConfig& config);

/// Trains only the adapter's parameters. Throws ContractError if the host is
/// not frozen and ConfigError if no head/tail of the host serves the task.
FinetuneResult finetune(const host::HostModel& host, const FinetuneConfig& config, const EpochHook& hook = {});

/// Task-dependent PSNR mode: luma for resolution-changing tasks, RGB otherwise.
PsnrMode psnr_mode_for(const data::DegradationSpec& spec);

/// Mean PSNR/SSIM of the host (plus adapter) on the held-out pairs.
MetricReport evaluate(const host::HostModel& host, const host::Adapter* adapter, const data::DegradationSpec& spec,
                      const std::vector<std::pair<data::Image, data::Image>>& pairs);

/// Restored images for `pairs`, clamped to [0, 1].
std::vector<data::Image> restore(const host::HostModel& host, const host::Adapter* adapter,
                                 const data::DegradationSpec& spec, const std::vector<data::Image>& lq);

}  // namespace air::pipeline
