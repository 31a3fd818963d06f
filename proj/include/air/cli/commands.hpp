// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>

#include "air/cli/run_config.hpp"

namespace air::cli {

enum ExitCode : int {
  kOk = 0,
  kContractFailed = 1,  // a checked contract did not hold (gradcheck, freeze)
  kError = 2,           // invalid config, missing file, malformed input
};

// Each command writes its artifacts under config.out_dir() (created on
// demand) together with "<command>_config.txt", the resolved config.

/// host.ckpt, pretrain_log.csv.
int cmd_pretrain(const RunConfig& config, std::ostream& log);
/// adapter.ckpt, finetune_report.csv (before/after rows), finetune_log.csv.
int cmd_finetune(const RunConfig& config, std::ostream& log);
/// eval_report.csv; with eval.dump_images = N also eval_<i>_{lq,out,hq}.ppm.
int cmd_eval(const RunConfig& config, std::ostream& log);
/// Prints the per-field table; kContractFailed when any field fails.
int cmd_gradcheck(const RunConfig& config, std::ostream& log);
/// paramcount.csv: trainable and total counts per method.
int cmd_paramcount(const RunConfig& config, std::ostream& log);
/// ablation_<axis>.csv per requested axis.
int cmd_ablate(const RunConfig& config, std::ostream& log);

/// Dispatches by name and maps engine errors to kError with a message on `err`.
int run_command(const std::string& name, const RunConfig& config, std::ostream& log, std::ostream& err);

}  // namespace air::cli
