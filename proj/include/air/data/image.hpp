// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "air/tensor/tensor.hpp"

namespace air::data {

/// Planar (C×H×W) image with f32 samples in [0, 1].
struct Image {
  int channels = 3;
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f)
      : channels(c), height(h), width(w), pixels(static_cast<std::size_t>(c) * h * w, fill) {}

  float& at(int c, int y, int x) { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  float at(int c, int y, int x) const { return pixels[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  bool same_shape(const Image& o) const { return channels == o.channels && height == o.height && width == o.width; }
  bool operator==(const Image&) const = default;
};

/// Clamps every sample to [0, 1] in place.
void clamp01(Image& img);

/// Sub-window [y, y+h) × [x, x+w).
Image crop(const Image& img, int y, int x, int h, int w);

/// Stacks equally shaped images into an N×C×H×W tensor.
Tensor to_tensor(std::span<const Image> images, DType dtype = DType::f32);
/// Splits an N×C×H×W tensor into images. Values are copied unclamped.
std::vector<Image> from_tensor(const Tensor& t);

/// Procedural RGB texture of size×size: smooth colour gradients, band-limited
/// sinusoidal noise, and random opaque rectangles and discs for hard edges.
Image synth_image(std::uint64_t seed, int size);

/// Anti-aliased bicubic (a = -0.5) downsampling by an integer factor, with
/// border replication, applied separably.
Image downsample_bicubic(const Image& img, int s);

/// img + N(0, (σ/255)²) per sample, then clamped unless `clamp` is false.
Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed, bool clamp = true);

/// clamp((img·factor)^gamma).
Image darken(const Image& img, double factor, double gamma);

struct DegradationSpec {
  enum class Kind { sr, noise, second_order, darken };

  Kind kind = Kind::sr;
  int scale = 1;
  double sigma = 0.0;
  double factor = 1.0;
  double gamma = 1.0;
  std::uint64_t seed = 0;

  /// Accepts "sr:S", "noise:SIGMA", "second_order:S:SIGMA", "darken:FACTOR:GAMMA".
  static DegradationSpec parse(const std::string& text);
  /// Canonical text form; parse(id()) reproduces the spec (seed aside).
  std::string id() const;
  /// Ratio of HQ to LQ spatial size.
  int output_scale() const { return kind == Kind::sr || kind == Kind::second_order ? scale : 1; }
  void validate() const;
};

/// (lq, hq). hq is the input image.
std::pair<Image, Image> degrade(const Image& img, const DegradationSpec& spec);

}  // namespace air::data
