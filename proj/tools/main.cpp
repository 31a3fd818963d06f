// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "air/cli/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"AdaptIR toy restoration experiments"};
  app.require_subcommand(1);

  std::string config_path, out, method, task;
  std::uint64_t seed = 0;
  int epochs = 0;
  std::vector<std::string> overrides;

  const char* commands[][2] = {
      {"pretrain", "Pretrain the toy host on its tasks and freeze it"},
      {"finetune", "Train an adapter on a frozen host"},
      {"eval", "Evaluate a host (and optional adapter) on held-out data"},
      {"gradcheck", "Finite-difference check of AdaptIR gradients"},
      {"paramcount", "Trainable and total parameter counts per method"},
      {"ablate", "Run the ablation tables"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "root seed");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--method", method, "adaptir, lora or bottleneck");
    sub->add_option("--task", task, "degradation spec, e.g. second_order:2:25");
    sub->add_option("--epochs", epochs, "fine-tuning epochs (pretrain.epochs for pretrain)");
    sub->add_option("--set", overrides, "extra key=value override")->take_all();
  }
  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();
  const CLI::App* sub = app.get_subcommands().front();

  air::cli::RunConfig config;
  try {
    if (!config_path.empty()) config = air::cli::RunConfig::load(config_path);
    if (sub->count("--seed")) config.set("seed", std::to_string(seed));
    if (sub->count("--out")) config.set("out", out);
    if (sub->count("--method")) config.set("method", method);
    if (sub->count("--task")) config.set("task", task);
    if (sub->count("--epochs")) config.set(name == "pretrain" ? "pretrain.epochs" : "epochs", std::to_string(epochs));
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw air::ConfigError("--set expects key=value, got '" + kv + "'");
      config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
  } catch (const air::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return air::cli::kError;
  }
  return air::cli::run_command(name, config, std::cout, std::cerr);
}
