// SPDX-License-Identifier: Apache-2.0
#include "air/pipeline/train.hpp"

#include <chrono>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "air/common/rng.hpp"
#include "air/tensor/ops.hpp"

namespace air::pipeline {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

data::DatasetConfig dataset_config(const DataConfig& d, std::uint64_t seed) {
  data::DatasetConfig c;
  c.corpus_size = d.corpus_size;
  c.image_size = d.image_size;
  c.crop = d.crop;
  c.batch = d.batch;
  c.seed = seed;
  return c;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Host head/tail serving `spec`, as a config error when there is none.
std::string slot_for(const host::HostModel& host, const data::DegradationSpec& spec) {
  try {
    return host.route(spec.id(), spec.output_scale());
  } catch (const LookupError& e) {
    throw ConfigError(std::string("task/host mismatch: ") + e.what());
  }
}

}  // namespace

std::string csv_header() { return "label,task,method,psnr,ssim,trainable_params,total_params,steps"; }

std::string csv_row(const MetricReport& r) {
  return r.label + "," + r.task + "," + r.method + "," + fixed(r.psnr, 4) + "," + fixed(r.ssim, 6) + "," +
         std::to_string(r.trainable_params) + "," + std::to_string(r.total_params) + "," + std::to_string(r.steps);
}

void write_csv(std::ostream& out, const std::vector<MetricReport>& rows) {
  out << csv_header() << '\n';
  for (const auto& r : rows) out << csv_row(r) << '\n';
}

std::string format_table(const std::vector<MetricReport>& rows) {
  std::size_t wl = 5, wt = 4, wm = 6;
  for (const auto& r : rows) {
    wl = std::max(wl, r.label.size());
    wt = std::max(wt, r.task.size());
    wm = std::max(wm, r.method.size());
  }
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  std::ostringstream out;
  out << pad("label", wl) << "  " << pad("task", wt) << "  " << pad("method", wm)
      << "     psnr     ssim  trainable      total  steps   time(s)\n";
  for (const auto& r : rows) {
    char nums[160];
    std::snprintf(nums, sizeof nums, "%9.4f %8.5f %10lld %10lld %6d %9.1f", r.psnr, r.ssim,
                  static_cast<long long>(r.trainable_params), static_cast<long long>(r.total_params), r.steps,
                  r.wall_time);
    out << pad(r.label, wl) << "  " << pad(r.task, wt) << "  " << pad(r.method, wm) << nums << '\n';
  }
  return out.str();
}

PretrainResult pretrain(const host::HostConfig& config, const PretrainConfig& train, const EpochHook& hook) {
  if (config.tasks.empty()) throw ConfigError("pretrain: at least one task is required");
  if (train.epochs < 1) throw ConfigError("pretrain: epochs must be positive");
  host::HostModel model = host::HostModel::init(config);
  std::vector<data::Dataset> sets;
  for (std::size_t t = 0; t < config.tasks.size(); ++t) {
    const auto& slot = config.tasks[t];
    const auto spec = data::DegradationSpec::parse(slot.id);
    if (spec.output_scale() != slot.scale) {
      throw ConfigError("pretrain: task " + slot.id + " has scale " + std::to_string(spec.output_scale()) +
                        " but its slot says " + std::to_string(slot.scale));
    }
    sets.emplace_back(dataset_config(train.data, derive_seed(train.seed, "pretrain.data", t)), spec);
  }
  model.set_trainable(true);
  const auto params = model.fields();
  TrainState state;
  state.base_lr = train.lr;
  state.seed = train.seed;
  PretrainResult result{model, {}};
  const int per_epoch = sets.front().batches_per_epoch();
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    state.epoch = epoch;
    const double lr = lr_at(epoch, train.lr, train.epochs);
    double total = 0;
    int count = 0;
    for (int b = 0; b < per_epoch; ++b) {
      for (std::size_t t = 0; t < sets.size(); ++t) {
        const data::Batch batch = sets[t].batch(epoch, b, config.dtype);
        const Tensor loss = l1_loss(host::host_forward(batch.lq, config.tasks[t].id, model), batch.hq);
        loss.backward();
        adamw_step(state, params, lr, train.adamw);
        total += loss.item();
        ++count;
      }
    }
    result.epoch_loss.push_back(total / count);
    if (hook) hook(epoch, result.epoch_loss.back(), lr);
  }
  host::freeze(model);
  result.model = model;
  return result;
}

const char* to_string(Method m) {
  switch (m) {
    case Method::adaptir:
      return "adaptir";
    case Method::lora:
      return "lora";
    case Method::bottleneck:
      return "bottleneck";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  if (name == "adaptir") return Method::adaptir;
  if (name == "lora") return Method::lora;
  if (name == "bottleneck") return Method::bottleneck;
  throw ConfigError("unknown method '" + name + "' (expected adaptir, lora or bottleneck)");
}

host::Adapter make_adapter(const host::HostModel& host, const FinetuneConfig& config) {
  const host::HostConfig& hc = host.config();
  adaptir::AdaptIRConfig ac = config.adaptir;
  ac.channels = hc.embed;
  ac.dtype = hc.dtype;
  ac.seed = derive_seed(config.seed, "adapter.init");
  ac.validate();
  const std::int64_t target = adaptir::count_parameters(ac) * hc.layers;
  switch (config.method) {
    case Method::adaptir:
      return host::Adapter::make_adaptir(hc, ac, config.insertion);
    case Method::lora: {
      baselines::LoRAConfig lc;
      lc.embed = hc.embed;
      lc.ranks = baselines::lora_ranks_for_budget(target, hc.embed, hc.layers);
      lc.seed = ac.seed;
      lc.dtype = hc.dtype;
      return host::Adapter::make_lora(hc, lc);
    }
    case Method::bottleneck: {
      baselines::BottleneckConfig bc;
      bc.embed = hc.embed;
      bc.widths = baselines::bottleneck_widths_for_budget(target, hc.embed, hc.layers);
      bc.seed = ac.seed;
      bc.dtype = hc.dtype;
      return host::Adapter::make_bottleneck(hc, bc);
    }
  }
  throw ConfigError("make_adapter: unknown method");
}

PsnrMode psnr_mode_for(const data::DegradationSpec& spec) {
  return spec.output_scale() > 1 ? PsnrMode::y_channel : PsnrMode::rgb;
}

std::vector<data::Image> restore(const host::HostModel& host, const host::Adapter* adapter,
                                 const data::DegradationSpec& spec, const std::vector<data::Image>& lq) {
  const std::string slot = slot_for(host, spec);
  NoGradGuard guard;
  const Tensor out = host::host_forward(data::to_tensor(lq, host.config().dtype), slot, host, adapter);
  auto images = data::from_tensor(out);
  for (auto& img : images) data::clamp01(img);
  return images;
}

MetricReport evaluate(const host::HostModel& host, const host::Adapter* adapter, const data::DegradationSpec& spec,
                      const std::vector<std::pair<data::Image, data::Image>>& pairs) {
  if (pairs.empty()) throw ContractError("evaluate: empty evaluation set");
  std::vector<data::Image> lq;
  for (const auto& p : pairs) lq.push_back(p.first);
  const auto out = restore(host, adapter, spec, lq);
  MetricReport r;
  r.task = spec.id();
  r.method = adapter && adapter->kind != host::Adapter::Kind::none ? host::to_string(adapter->kind) : "frozen";
  const PsnrMode mode = psnr_mode_for(spec);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    r.psnr += psnr(out[i], pairs[i].second, mode);
    r.ssim += ssim(out[i], pairs[i].second);
  }
  r.psnr /= static_cast<double>(pairs.size());
  r.ssim /= static_cast<double>(pairs.size());
  r.trainable_params = adapter ? adapter->parameter_count() : 0;
  r.total_params = host.parameter_count() + r.trainable_params;
  return r;
}

FinetuneResult finetune(const host::HostModel& host, const FinetuneConfig& config, const EpochHook& hook) {
  if (!host.frozen()) throw ContractError("finetune: host must be frozen first");
  if (config.epochs < 1) throw ConfigError("finetune: epochs must be positive");
  const auto t0 = Clock::now();
  const auto spec = data::DegradationSpec::parse(config.task);
  const std::string slot = slot_for(host, spec);
  const auto held = data::held_out_set(spec, config.data.heldout, config.data.crop, config.seed);

  FinetuneResult result;
  result.checksum_before = host.checksum();
  result.before = evaluate(host, nullptr, spec, held);
  result.before.label = "before";
  result.before.wall_time = seconds_since(t0);

  result.adapter = make_adapter(host, config);
  result.adapter.set_requires_grad(true);
  const auto params = host::trainable_parameters(host, &result.adapter);
  const data::Dataset set(dataset_config(config.data, derive_seed(config.seed, "finetune.data")), spec);
  TrainState state;
  state.base_lr = config.lr;
  state.seed = config.seed;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    state.epoch = epoch;
    const double lr = lr_at(epoch, config.lr, config.epochs);
    double total = 0;
    for (int b = 0; b < set.batches_per_epoch(); ++b) {
      const data::Batch batch = set.batch(epoch, b, host.config().dtype);
      const Tensor loss = l1_loss(host::host_forward(batch.lq, slot, host, &result.adapter), batch.hq);
      loss.backward();
      adamw_step(state, params, lr, config.adamw);
      total += loss.item();
    }
    result.epoch_loss.push_back(total / set.batches_per_epoch());
    if (hook) hook(epoch, result.epoch_loss.back(), lr);
  }
  result.adapter.set_requires_grad(false);

  result.after = evaluate(host, &result.adapter, spec, held);
  result.after.label = "after";
  result.after.steps = state.step;
  result.after.wall_time = seconds_since(t0);
  result.checksum_after = host.checksum();
  return result;
}

}  // namespace air::pipeline
