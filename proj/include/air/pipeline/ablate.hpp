// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "air/pipeline/train.hpp"

namespace air::pipeline {

/// efficiency: structural switches (decomposition, depth-separable, CSM).
/// components: branch subsets. insertion: position × form.
enum class AblationAxis { efficiency, components, insertion };

const char* to_string(AblationAxis axis);
AblationAxis parse_axis(const std::string& name);

struct AblationSetting {
  std::string label;
  adaptir::AdaptIRConfig adaptir;
  host::InsertionSpec insertion;
};

/// Row settings of one axis, in table order, derived from `base`.
std::vector<AblationSetting> ablation_settings(AblationAxis axis, const adaptir::AdaptIRConfig& base = {});

/// One AdaptIR fine-tuning run per setting, all from the same seed. Each
/// report is the run's post-training row relabelled with the setting.
std::vector<MetricReport> ablate(const host::HostModel& host, const FinetuneConfig& base, AblationAxis axis,
                                 const std::function<void(const MetricReport&)>& on_row = {});

}  // namespace air::pipeline
