// SPDX-License-Identifier: Apache-2.0
// Binary PPM (P6, RGB) and PGM (P5, gray) with maxval 255.
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "air/data/image.hpp"

namespace air::data {

/// Rounds half up to 8 bits after clamping to [0, 1].
std::uint8_t quantize(float v);

std::vector<std::byte> encode_ppm(const Image& img);
/// Malformed or truncated input raises ParseError naming the byte offset.
Image decode_ppm(std::span<const std::byte> bytes);

void save_ppm(const Image& img, const std::filesystem::path& path);
Image load_ppm(const std::filesystem::path& path);

}  // namespace air::data
