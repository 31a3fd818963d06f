// SPDX-License-Identifier: Apache-2.0
#include "air/data/ppm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

namespace air::data {
namespace {

class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::byte> bytes) : b_(bytes) {}

  std::size_t pos() const { return pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError("ppm: " + what + " at byte offset " + std::to_string(pos_));
  }

  char peek() const { return pos_ < b_.size() ? static_cast<char>(b_[pos_]) : '\0'; }
  bool at_end() const { return pos_ >= b_.size(); }

  void skip_space_and_comments() {
    while (!at_end()) {
      const char c = peek();
      if (c == '#') {
        while (!at_end() && peek() != '\n') ++pos_;
      } else if (is_space(c)) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  int read_uint(const char* field) {
    skip_space_and_comments();
    if (at_end()) fail(std::string("truncated header while reading ") + field);
    if (peek() < '0' || peek() > '9') fail(std::string("expected ") + field);
    long long v = 0;
    while (!at_end() && peek() >= '0' && peek() <= '9') {
      v = v * 10 + (peek() - '0');
      if (v > 1'000'000) fail(std::string(field) + " too large");
      ++pos_;
    }
    return static_cast<int>(v);
  }

  void single_space() {
    if (at_end()) fail("truncated header");
    if (!is_space(peek())) fail("expected whitespace after maxval");
    ++pos_;
  }

  void advance(std::size_t n) { pos_ += n; }

  static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

 private:
  std::span<const std::byte> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint8_t quantize(float v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

std::vector<std::byte> encode_ppm(const Image& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw ShapeError("ppm: only 1- or 3-channel images can be written, got " + std::to_string(img.channels));
  }
  const std::string header = std::string(img.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(img.width) + " " +
                             std::to_string(img.height) + "\n255\n";
  std::vector<std::byte> out;
  out.reserve(header.size() + img.pixels.size());
  for (char c : header) out.push_back(static_cast<std::byte>(c));
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.push_back(static_cast<std::byte>(quantize(img.at(c, y, x))));
  return out;
}

Image decode_ppm(std::span<const std::byte> bytes) {
  HeaderReader r(bytes);
  if (bytes.size() < 2 || static_cast<char>(bytes[0]) != 'P') r.fail("missing magic number");
  const char variant = static_cast<char>(bytes[1]);
  if (variant == '3' || variant == '2') {
    throw ParseError(std::string("ppm: ASCII variant P") + variant + " is not supported (byte offset 0)");
  }
  if (variant != '6' && variant != '5') r.fail(std::string("unknown format P") + variant);
  r.advance(2);
  const int channels = variant == '6' ? 3 : 1;
  const int width = r.read_uint("width");
  const int height = r.read_uint("height");
  const std::size_t maxval_at = r.pos();
  const int maxval = r.read_uint("maxval");
  if (maxval != 255) {
    throw ParseError("ppm: maxval " + std::to_string(maxval) + " unsupported at byte offset " +
                     std::to_string(maxval_at));
  }
  if (width < 1 || height < 1) r.fail("empty image");
  r.single_space();
  const std::size_t start = r.pos();
  const std::size_t need = static_cast<std::size_t>(width) * height * channels;
  if (bytes.size() - start < need) {
    throw ParseError("ppm: payload truncated at byte offset " + std::to_string(bytes.size()) + " (expected " +
                     std::to_string(start + need) + " bytes)");
  }
  Image img(channels, height, width);
  std::size_t k = start;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) img.at(c, y, x) = static_cast<float>(std::to_integer<int>(bytes[k++])) / 255.0f;
  return img;
}

void save_ppm(const Image& img, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FileError("ppm: cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FileError("ppm: write failed for " + path.string());
}

Image load_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FileError("ppm: cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_ppm(std::as_bytes(std::span<const char>(raw)));
}

}  // namespace air::data
