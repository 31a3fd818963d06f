// SPDX-License-Identifier: Apache-2.0
#include "air/tensor/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace air {
namespace {

constexpr char kMagic[8] = {'A', 'I', 'R', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::vector<std::byte>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFU));
}

void put_f32(std::vector<std::byte>& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xFFU));
}

std::uint64_t get_u64(std::span<const std::byte> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

float get_f32(std::span<const std::byte> in, std::size_t at) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
  return std::bit_cast<float>(bits);
}

}  // namespace

const Tensor& Checkpoint::field(const std::string& name) const {
  for (const auto& f : fields) {
    if (f.name == name) return f.tensor;
  }
  throw LookupError("checkpoint (" + kind + "): no field named '" + name + "'");
}

std::vector<std::byte> field_bytes(const std::vector<NamedTensor>& fields) {
  std::vector<std::byte> out;
  for (const auto& f : fields) {
    for (double v : f.tensor.to_vector()) put_f32(out, static_cast<float>(v));
  }
  return out;
}

std::vector<std::byte> encode_checkpoint(const Checkpoint& checkpoint) {
  nlohmann::json header;
  header["kind"] = checkpoint.kind;
  header["config"] = checkpoint.config;
  header["fields"] = nlohmann::json::array();
  for (const auto& f : checkpoint.fields) {
    header["fields"].push_back({{"name", f.name}, {"shape", f.tensor.shape()}});
  }
  const std::string text = header.dump();
  std::vector<std::byte> out;
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  put_u64(out, text.size());
  for (char c : text) out.push_back(static_cast<std::byte>(c));
  const auto blobs = field_bytes(checkpoint.fields);
  out.insert(out.end(), blobs.begin(), blobs.end());
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::byte> bytes, DType dtype) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, 8) != 0) {
    throw ParseError("checkpoint: missing AIRCKPT1 magic at byte offset 0");
  }
  const std::uint64_t header_len = get_u64(bytes, 8);
  if (header_len > bytes.size() - 16) {
    throw ParseError("checkpoint: header length " + std::to_string(header_len) + " exceeds file size");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(reinterpret_cast<const char*>(bytes.data()) + 16,
                                   reinterpret_cast<const char*>(bytes.data()) + 16 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: malformed header at byte offset 16: ") + e.what());
  }
  Checkpoint out;
  out.kind = header.at("kind").get<std::string>();
  out.config = header.at("config");
  std::size_t at = 16 + header_len;
  for (const auto& f : header.at("fields")) {
    const auto shape = f.at("shape").get<Shape>();
    const auto n = static_cast<std::size_t>(numel(shape));
    if (at + 4 * n > bytes.size()) {
      throw ParseError("checkpoint: field '" + f.at("name").get<std::string>() + "' truncated at byte offset " +
                       std::to_string(bytes.size()));
    }
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = get_f32(bytes, at + 4 * i);
    at += 4 * n;
    out.fields.push_back({f.at("name").get<std::string>(), Tensor::from_values(shape, values, dtype)});
  }
  if (at != bytes.size()) {
    throw ParseError("checkpoint: " + std::to_string(bytes.size() - at) + " trailing bytes at offset " +
                     std::to_string(at));
  }
  return out;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(checkpoint);
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw FileError("cannot write checkpoint " + path.string());
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path, DType dtype) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw FileError("cannot open checkpoint " + path.string());
  }
  std::vector<char> raw((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::as_bytes(std::span<const char>(raw)), dtype);
}

}  // namespace air
