// SPDX-License-Identifier: Apache-2.0
#include "air/pipeline/ablate.hpp"

namespace air::pipeline {

const char* to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::efficiency:
      return "efficiency";
    case AblationAxis::components:
      return "components";
    case AblationAxis::insertion:
      return "insertion";
  }
  return "?";
}

AblationAxis parse_axis(const std::string& name) {
  if (name == "efficiency") return AblationAxis::efficiency;
  if (name == "components") return AblationAxis::components;
  if (name == "insertion") return AblationAxis::insertion;
  throw ConfigError("unsupported ablation axis '" + name + "' (expected efficiency, components or insertion)");
}

std::vector<AblationSetting> ablation_settings(AblationAxis axis, const adaptir::AdaptIRConfig& base) {
  std::vector<AblationSetting> rows;
  switch (axis) {
    case AblationAxis::efficiency: {
      AblationSetting s{"0:baseline", base, {}};
      rows.push_back(s);
      // Rows 2-4 build on row 1.
      s.label = "1:full_rank_lim";
      s.adaptir.lim_low_rank = false;
      rows.push_back(s);
      AblationSetting dense_lim = s;
      dense_lim.label = "2:full_rank_lim+dense_lim";
      dense_lim.adaptir.lim_depthwise = false;
      rows.push_back(dense_lim);
      AblationSetting dense_fam = s;
      dense_fam.label = "3:full_rank_lim+dense_fam";
      dense_fam.adaptir.fam_depthwise = false;
      rows.push_back(dense_fam);
      AblationSetting both = s;
      both.label = "4:full_rank_lim+dense_lim+dense_fam-csm";
      both.adaptir.lim_depthwise = false;
      both.adaptir.fam_depthwise = false;
      both.adaptir.branches.csm = false;
      rows.push_back(both);
      break;
    }
    case AblationAxis::components: {
      const adaptir::BranchMask masks[] = {{false, false, true}, {false, true, true}, {true, true, false}, {true, true, true}};
      const char* labels[] = {"csm", "fam+csm", "lim+fam", "lim+fam+csm"};
      for (int i = 0; i < 4; ++i) {
        AblationSetting s{labels[i], base, {}};
        s.adaptir.branches = masks[i];
        rows.push_back(s);
      }
      break;
    }
    case AblationAxis::insertion:
      for (const char* spec : {"mlp:parallel", "attention:parallel", "mlp:sequential", "attention:sequential"})
        rows.push_back({spec, base, host::InsertionSpec::parse(spec)});
      break;
  }
  return rows;
}

std::vector<MetricReport> ablate(const host::HostModel& host, const FinetuneConfig& base, AblationAxis axis,
                                 const std::function<void(const MetricReport&)>& on_row) {
  std::vector<MetricReport> out;
  for (const auto& s : ablation_settings(axis, base.adaptir)) {
    FinetuneConfig cfg = base;
    cfg.method = Method::adaptir;
    cfg.adaptir = s.adaptir;
    cfg.insertion = s.insertion;
    MetricReport r = finetune(host, cfg).after;
    r.label = s.label;
    if (on_row) on_row(r);
    out.push_back(r);
  }
  return out;
}

}  // namespace air::pipeline
