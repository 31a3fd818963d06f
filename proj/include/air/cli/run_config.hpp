// SPDX-License-Identifier: Apache-2.0
//
// Flat key = value run configuration. Every key has a default; a config file
// or command-line override may only name known keys.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "air/pipeline/ablate.hpp"
#include "air/pipeline/gradcheck.hpp"
#include "air/pipeline/train.hpp"

namespace air::cli {

class RunConfig {
 public:
  RunConfig();

  /// Lines of "key = value"; '#' starts a comment. Keys not mentioned keep
  /// their defaults. Unknown keys and malformed values are ConfigErrors that
  /// name the line.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool has_key(const std::string& key) const;

  /// Every key in declaration order, one "key = value" line each.
  std::string to_text() const;

  std::filesystem::path out_dir() const;
  /// host_checkpoint, or out/host.ckpt when unset.
  std::filesystem::path host_checkpoint() const;
  std::uint64_t seed() const;

  host::HostConfig host() const;
  pipeline::PretrainConfig pretrain() const;
  pipeline::FinetuneConfig finetune() const;
  pipeline::GradcheckOptions gradcheck() const;
  std::vector<pipeline::AblationAxis> axes() const;
  int dump_images() const;

  /// Builds every structured view once so errors surface before any work.
  void validate() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;

  int as_int(const std::string& key) const;
  double as_double(const std::string& key) const;
};

}  // namespace air::cli
