// SPDX-License-Identifier: Apache-2.0
#include "air/cli/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>

#include "air/data/ppm.hpp"

namespace air::cli {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

fs::path prepare(const RunConfig& config, const std::string& command) {
  config.validate();
  const fs::path out = config.out_dir();
  fs::create_directories(out);
  RunConfig resolved = config;
  resolved.set("host_checkpoint", config.host_checkpoint().string());
  std::ofstream f(out / (command + "_config.txt"), std::ios::binary);
  f << resolved.to_text();
  if (!f) throw FileError("cannot write " + (out / (command + "_config.txt")).string());
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw FileError("cannot write " + path.string());
}

void write_reports(const fs::path& path, const std::vector<pipeline::MetricReport>& rows) {
  std::ofstream f(path, std::ios::binary);
  pipeline::write_csv(f, rows);
  if (!f) throw FileError("cannot write " + path.string());
}

std::string num(double v, const char* fmt = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

double elapsed(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

host::HostModel load_frozen_host(const RunConfig& config) {
  const fs::path path = config.host_checkpoint();
  if (!fs::exists(path)) throw FileError("host checkpoint " + path.string() + " does not exist (run pretrain first)");
  host::HostModel model = host::HostModel::from_checkpoint(load_checkpoint(path, parse_dtype(config.get("host.dtype"))));
  host::freeze(model);
  return model;
}

std::string epoch_csv_line(int epoch, double loss, double lr) {
  return std::to_string(epoch) + "," + num(loss, "%.8f") + "," + num(lr, "%.6e") + "\n";
}

}  // namespace

int cmd_pretrain(const RunConfig& config, std::ostream& log) {
  const fs::path out = prepare(config, "pretrain");
  const auto t0 = Clock::now();
  std::string csv = "epoch,loss,lr\n";
  const auto result = pipeline::pretrain(config.host(), config.pretrain(), [&](int e, double loss, double lr) {
    csv += epoch_csv_line(e, loss, lr);
    log << "pretrain epoch " << e << " loss " << num(loss) << " lr " << num(lr) << '\n' << std::flush;
  });
  save_checkpoint(result.model.to_checkpoint(), out / "host.ckpt");
  write_text(out / "pretrain_log.csv", csv);
  log << "host parameters " << result.model.parameter_count() << '\n'
      << "host checksum " << result.model.checksum() << '\n'
      << "wall time " << num(elapsed(t0), "%.1f") << " s\n";
  return kOk;
}

int cmd_finetune(const RunConfig& config, std::ostream& log) {
  const fs::path out = prepare(config, "finetune");
  const host::HostModel model = load_frozen_host(config);
  const pipeline::FinetuneConfig fc = config.finetune();
  std::string csv = "epoch,loss,lr\n";
  const auto r = pipeline::finetune(model, fc, [&](int e, double loss, double lr) {
    csv += epoch_csv_line(e, loss, lr);
    log << "finetune epoch " << e << " loss " << num(loss) << " lr " << num(lr) << '\n' << std::flush;
  });
  save_checkpoint(r.adapter.to_checkpoint(), out / "adapter.ckpt");
  write_text(out / "finetune_log.csv", csv);
  write_reports(out / "finetune_report.csv", {r.before, r.after});
  const double ratio = static_cast<double>(r.after.trainable_params) / static_cast<double>(r.after.total_params);
  log << pipeline::format_table({r.before, r.after}) << "psnr before " << num(r.before.psnr, "%.4f") << " dB, after "
      << num(r.after.psnr, "%.4f") << " dB (" << num(r.after.psnr - r.before.psnr, "%+.4f") << ")\n"
      << "trainable/total " << r.after.trainable_params << "/" << r.after.total_params << " = "
      << num(100 * ratio, "%.3f") << "%\n"
      << "host checksum before " << r.checksum_before << '\n'
      << "host checksum after  " << r.checksum_after << '\n';
  if (r.checksum_before != r.checksum_after) {
    log << "FAIL freeze contract: host parameters changed during fine-tuning\n";
    return kContractFailed;
  }
  return kOk;
}

int cmd_eval(const RunConfig& config, std::ostream& log) {
  const fs::path out = prepare(config, "eval");
  const host::HostModel model = load_frozen_host(config);
  const pipeline::FinetuneConfig fc = config.finetune();
  const auto spec = data::DegradationSpec::parse(fc.task);
  host::Adapter adapter;
  const std::string& adapter_path = config.get("adapter_checkpoint");
  if (!adapter_path.empty()) {
    if (!fs::exists(adapter_path)) throw FileError("adapter checkpoint " + adapter_path + " does not exist");
    adapter = host::Adapter::from_checkpoint(load_checkpoint(adapter_path, model.config().dtype));
  }
  const auto held = data::held_out_set(spec, fc.data.heldout, fc.data.crop, fc.seed);
  pipeline::MetricReport r = pipeline::evaluate(model, &adapter, spec, held);
  r.label = adapter_path.empty() ? "frozen" : "adapted";
  write_reports(out / "eval_report.csv", {r});
  log << pipeline::format_table({r});
  const int dumps = std::min<int>(config.dump_images(), static_cast<int>(held.size()));
  if (dumps > 0) {
    std::vector<data::Image> lq;
    for (int i = 0; i < dumps; ++i) lq.push_back(held[static_cast<std::size_t>(i)].first);
    const auto restored = pipeline::restore(model, &adapter, spec, lq);
    for (int i = 0; i < dumps; ++i) {
      const std::string stem = "eval_" + std::to_string(i);
      data::save_ppm(lq[static_cast<std::size_t>(i)], out / (stem + "_lq.ppm"));
      data::save_ppm(restored[static_cast<std::size_t>(i)], out / (stem + "_out.ppm"));
      data::save_ppm(held[static_cast<std::size_t>(i)].second, out / (stem + "_hq.ppm"));
    }
    log << "wrote " << dumps << " image triplets to " << out.string() << '\n';
  }
  return kOk;
}

int cmd_gradcheck(const RunConfig& config, std::ostream& log) {
  const auto options = config.gradcheck();
  const auto t0 = Clock::now();
  const auto report = pipeline::gradcheck_adaptir(options);
  const auto& rows = report.rows;
  bool ok = true;
  log << "group            rel_err      status\n";
  for (const auto& row : rows) {
    std::string name = row.group;
    name.resize(std::max<std::size_t>(16, name.size()), ' ');
    log << name << " " << num(row.rel_err, "%.3e") << "    " << (row.pass ? "pass" : "FAIL") << '\n';
    ok = ok && row.pass;
  }
  log << "tolerance " << num(options.tolerance, "%.0e") << ", eps " << num(options.eps, "%.0e") << ", input "
      << options.batch << "x" << options.channels << "x" << options.size << "x" << options.size << ", "
      << num(elapsed(t0), "%.2f") << " s\n"
      << "instance draw " << report.draw << ", min spectral amplitude " << num(report.min_amplitude, "%.3e")
      << ", min residual " << num(report.min_residual, "%.3e") << '\n';
  if (!ok) {
    for (const auto& row : rows)
      if (!row.pass) log << "FAIL gradient check: " << row.group << " rel err " << num(row.rel_err, "%.3e") << '\n';
    return kContractFailed;
  }
  return kOk;
}

int cmd_paramcount(const RunConfig& config, std::ostream& log) {
  const fs::path out = prepare(config, "paramcount");
  host::HostModel model = host::HostModel::init(config.host());
  host::freeze(model);
  const std::int64_t host_n = model.parameter_count();
  std::string csv = "method,trainable_params,total_params,ratio\n";
  log << "host parameters " << host_n << '\n';
  for (auto m : {pipeline::Method::adaptir, pipeline::Method::lora, pipeline::Method::bottleneck}) {
    pipeline::FinetuneConfig fc = config.finetune();
    fc.method = m;
    const std::int64_t n = pipeline::make_adapter(model, fc).parameter_count();
    const double ratio = static_cast<double>(n) / static_cast<double>(n + host_n);
    csv += std::string(pipeline::to_string(m)) + "," + std::to_string(n) + "," + std::to_string(n + host_n) + "," +
           num(ratio, "%.6f") + "\n";
    log << pipeline::to_string(m) << ": " << n << " trainable of " << n + host_n << " (" << num(100 * ratio, "%.3f")
        << "%)\n";
  }
  write_text(out / "paramcount.csv", csv);
  return kOk;
}

int cmd_ablate(const RunConfig& config, std::ostream& log) {
  const fs::path out = prepare(config, "ablate");
  const host::HostModel model = load_frozen_host(config);
  pipeline::FinetuneConfig fc = config.finetune();
  fc.epochs = std::stoi(config.get("ablate.epochs"));
  for (const auto axis : config.axes()) {
    const auto t0 = Clock::now();
    log << "ablation axis " << pipeline::to_string(axis) << '\n' << std::flush;
    const auto rows = pipeline::ablate(model, fc, axis, [&](const pipeline::MetricReport& r) {
      log << "  " << r.label << ": psnr " << num(r.psnr, "%.4f") << " params " << r.trainable_params << '\n'
          << std::flush;
    });
    write_reports(out / ("ablation_" + std::string(pipeline::to_string(axis)) + ".csv"), rows);
    log << pipeline::format_table(rows) << "axis wall time " << num(elapsed(t0), "%.1f") << " s\n";
  }
  return kOk;
}

int run_command(const std::string& name, const RunConfig& config, std::ostream& log, std::ostream& err) {
  try {
    if (name == "pretrain") return cmd_pretrain(config, log);
    if (name == "finetune") return cmd_finetune(config, log);
    if (name == "eval") return cmd_eval(config, log);
    if (name == "gradcheck") return cmd_gradcheck(config, log);
    if (name == "paramcount") return cmd_paramcount(config, log);
    if (name == "ablate") return cmd_ablate(config, log);
    err << "error: unknown command '" << name << "'\n";
    return kError;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kError;
  }
}

}  // namespace air::cli
