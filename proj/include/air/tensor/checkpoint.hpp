// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "air/tensor/tensor.hpp"

namespace air {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Parameter file: the 8-byte magic "AIRCKPT1", a little-endian u64 header
/// length, the header as UTF-8 JSON
///   {"kind": ..., "config": {...}, "fields": [{"name": ..., "shape": [...]}, ...]}
/// and then every field's values as little-endian f32, in header order.
struct Checkpoint {
  std::string kind;
  nlohmann::json config;
  std::vector<NamedTensor> fields;

  /// Field by name; throws LookupError if absent.
  const Tensor& field(const std::string& name) const;
};

std::vector<std::byte> encode_checkpoint(const Checkpoint& checkpoint);
/// Fields decode as f32, or as `dtype` when given.
Checkpoint decode_checkpoint(std::span<const std::byte> bytes, DType dtype = DType::f32);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path, DType dtype = DType::f32);

/// f32 little-endian byte image of the fields, in order (what the checkpoint
/// blobs contain).
std::vector<std::byte> field_bytes(const std::vector<NamedTensor>& fields);

}  // namespace air
