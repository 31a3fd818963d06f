// SPDX-License-Identifier: Apache-2.0
#include "air/data/image.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "air/common/rng.hpp"

namespace air::data {
namespace {

double keys_cubic(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

struct Tap {
  int index;
  double weight;
};

// Normalized taps for each of the n/s outputs of a length-n signal.
std::vector<std::vector<Tap>> bicubic_taps(int n, int s) {
  std::vector<std::vector<Tap>> taps(static_cast<std::size_t>(n / s));
  for (int o = 0; o < n / s; ++o) {
    const double center = (o + 0.5) * s - 0.5;
    const int lo = static_cast<int>(std::floor(center - 2.0 * s));
    const int hi = static_cast<int>(std::ceil(center + 2.0 * s));
    double total = 0.0;
    for (int j = lo; j <= hi; ++j) {
      const double w = keys_cubic((j - center) / s);
      if (w == 0.0) continue;
      taps[o].push_back({std::clamp(j, 0, n - 1), w});
      total += w;
    }
    for (auto& t : taps[o]) t.weight /= total;
  }
  return taps;
}

double parse_number(const std::string& text, const std::string& field, const std::string& whole) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ConfigError("degradation spec '" + whole + "': " + field + " '" + text + "' is not a number");
  }
  return v;
}

int parse_int(const std::string& text, const std::string& field, const std::string& whole) {
  const double v = parse_number(text, field, whole);
  if (v != std::floor(v)) throw ConfigError("degradation spec '" + whole + "': " + field + " must be an integer");
  return static_cast<int>(v);
}

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

void clamp01(Image& img) {
  for (auto& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

Image crop(const Image& img, int y, int x, int h, int w) {
  if (y < 0 || x < 0 || h < 1 || w < 1 || y + h > img.height || x + w > img.width) {
    throw ShapeError("crop: window exceeds the image");
  }
  Image out(img.channels, h, w);
  for (int c = 0; c < img.channels; ++c)
    for (int r = 0; r < h; ++r)
      std::copy_n(&img.pixels[(static_cast<std::size_t>(c) * img.height + y + r) * img.width + x], w,
                  &out.pixels[(static_cast<std::size_t>(c) * h + r) * w]);
  return out;
}

Tensor to_tensor(std::span<const Image> images, DType dtype) {
  if (images.empty()) throw ShapeError("to_tensor: no images");
  const Image& first = images.front();
  std::vector<double> v;
  v.reserve(images.size() * first.pixels.size());
  for (const auto& img : images) {
    if (!img.same_shape(first)) throw ShapeError("to_tensor: images differ in shape");
    v.insert(v.end(), img.pixels.begin(), img.pixels.end());
  }
  return Tensor::from_values({static_cast<std::int64_t>(images.size()), first.channels, first.height, first.width},
                             v, dtype);
}

std::vector<Image> from_tensor(const Tensor& t) {
  if (t.rank() != 4) throw ShapeError("from_tensor: expected N×C×H×W, got " + to_string(t.shape()));
  const auto v = t.to_vector();
  std::vector<Image> out;
  const int c = static_cast<int>(t.dim(1)), h = static_cast<int>(t.dim(2)), w = static_cast<int>(t.dim(3));
  const std::size_t plane = static_cast<std::size_t>(c) * h * w;
  for (std::int64_t n = 0; n < t.dim(0); ++n) {
    Image img(c, h, w);
    for (std::size_t i = 0; i < plane; ++i) img.pixels[i] = static_cast<float>(v[n * plane + i]);
    out.push_back(std::move(img));
  }
  return out;
}

Image synth_image(std::uint64_t seed, int size) {
  if (size < 8) throw ShapeError("synth_image: size must be at least 8, got " + std::to_string(size));
  Rng rng(seed, "synth");
  const int n = size;
  std::vector<double> px(static_cast<std::size_t>(3 * n * n));
  auto at = [&](int c, int y, int x) -> double& { return px[(static_cast<std::size_t>(c) * n + y) * n + x]; };

  // Smooth colour ramps.
  for (int c = 0; c < 3; ++c) {
    const double base = rng.uniform(0.25, 0.75), gx = rng.uniform(-0.3, 0.3), gy = rng.uniform(-0.3, 0.3);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) at(c, y, x) = base + gx * (x / double(n) - 0.5) + gy * (y / double(n) - 0.5);
  }

  // Band-limited noise as a handful of plane waves.
  const int max_freq = std::max(2, n / 6);
  for (int k = 0; k < 8; ++k) {
    const double fx = static_cast<double>(rng.below(static_cast<std::uint64_t>(2 * max_freq + 1))) - max_freq;
    const double fy = static_cast<double>(rng.below(static_cast<std::uint64_t>(max_freq + 1)));
    const double amp = 0.12 / (1.0 + 0.5 * std::hypot(fx, fy));
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double mix[3];
    for (double& m : mix) m = rng.uniform(-1.0, 1.0);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double s = amp * std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) / n + phase);
        for (int c = 0; c < 3; ++c) at(c, y, x) += mix[c] * s;
      }
  }

  // Opaque shapes give step edges and flat regions.
  const int shapes = 4 + static_cast<int>(rng.below(4));
  for (int k = 0; k < shapes; ++k) {
    const bool disc = rng.uniform(0, 1) < 0.4;
    const double cy = rng.uniform(0, n), cx = rng.uniform(0, n);
    const double ry = rng.uniform(n / 12.0, n / 3.0), rx = rng.uniform(n / 12.0, n / 3.0);
    const double alpha = rng.uniform(0.6, 1.0);
    double colour[3];
    for (double& col : colour) col = rng.uniform(0.0, 1.0);
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
        const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (!inside) continue;
        for (int c = 0; c < 3; ++c) at(c, y, x) = (1 - alpha) * at(c, y, x) + alpha * colour[c];
      }
  }

  Image img(3, n, n);
  for (std::size_t i = 0; i < px.size(); ++i) img.pixels[i] = static_cast<float>(std::clamp(px[i], 0.0, 1.0));
  return img;
}

Image downsample_bicubic(const Image& img, int s) {
  if (s < 1) throw ConfigError("downsample_bicubic: factor must be positive, got " + std::to_string(s));
  if (img.height % s != 0 || img.width % s != 0) {
    throw ShapeError("downsample_bicubic: " + std::to_string(img.height) + "×" + std::to_string(img.width) +
                     " is not divisible by " + std::to_string(s));
  }
  const int h = img.height / s, w = img.width / s;
  const auto tx = bicubic_taps(img.width, s), ty = bicubic_taps(img.height, s);
  Image out(img.channels, h, w);
  std::vector<double> rows(static_cast<std::size_t>(img.height) * w);
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (const auto& t : tx[x]) acc += t.weight * img.at(c, y, t.index);
        rows[static_cast<std::size_t>(y) * w + x] = acc;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (const auto& t : ty[y]) acc += t.weight * rows[static_cast<std::size_t>(t.index) * w + x];
        out.at(c, y, x) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
      }
  }
  return out;
}

Image add_gaussian_noise(const Image& img, double sigma, std::uint64_t seed, bool clamp) {
  if (sigma < 0) throw ConfigError("add_gaussian_noise: sigma must be non-negative");
  Image out = img;
  if (sigma == 0.0) return out;
  Rng rng(seed, "noise");
  std::normal_distribution<double> dist(0.0, sigma / 255.0);
  for (auto& v : out.pixels) v = static_cast<float>(v + dist(rng.engine()));
  if (clamp) clamp01(out);
  return out;
}

Image darken(const Image& img, double factor, double gamma) {
  Image out = img;
  for (auto& v : out.pixels) v = static_cast<float>(std::clamp(std::pow(v * factor, gamma), 0.0, 1.0));
  return out;
}

DegradationSpec DegradationSpec::parse(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  if (parts.empty()) throw ConfigError("degradation spec is empty");
  DegradationSpec spec;
  auto expect = [&](std::size_t n, const char* form) {
    if (parts.size() != n) throw ConfigError("degradation spec '" + text + "': expected " + form);
  };
  const std::string& kind = parts[0];
  if (kind == "sr") {
    expect(2, "sr:SCALE");
    spec.kind = Kind::sr;
    spec.scale = parse_int(parts[1], "scale", text);
  } else if (kind == "noise") {
    expect(2, "noise:SIGMA");
    spec.kind = Kind::noise;
    spec.sigma = parse_number(parts[1], "sigma", text);
  } else if (kind == "second_order") {
    expect(3, "second_order:SCALE:SIGMA");
    spec.kind = Kind::second_order;
    spec.scale = parse_int(parts[1], "scale", text);
    spec.sigma = parse_number(parts[2], "sigma", text);
  } else if (kind == "darken") {
    expect(3, "darken:FACTOR:GAMMA");
    spec.kind = Kind::darken;
    spec.factor = parse_number(parts[1], "factor", text);
    spec.gamma = parse_number(parts[2], "gamma", text);
  } else {
    throw ConfigError("degradation spec '" + text + "': unknown kind '" + kind +
                      "' (expected sr, noise, second_order or darken)");
  }
  spec.validate();
  return spec;
}

void DegradationSpec::validate() const {
  if ((kind == Kind::sr || kind == Kind::second_order) && scale < 1) {
    throw ConfigError("degradation spec: scale must be at least 1");
  }
  if ((kind == Kind::noise || kind == Kind::second_order) && sigma < 0) {
    throw ConfigError("degradation spec: sigma must be non-negative");
  }
  if (kind == Kind::darken && (factor <= 0 || gamma <= 0)) {
    throw ConfigError("degradation spec: darken factor and gamma must be positive");
  }
}

std::string DegradationSpec::id() const {
  switch (kind) {
    case Kind::sr:
      return "sr:" + std::to_string(scale);
    case Kind::noise:
      return "noise:" + format_number(sigma);
    case Kind::second_order:
      return "second_order:" + std::to_string(scale) + ":" + format_number(sigma);
    case Kind::darken:
      return "darken:" + format_number(factor) + ":" + format_number(gamma);
  }
  return {};
}

std::pair<Image, Image> degrade(const Image& img, const DegradationSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case DegradationSpec::Kind::sr:
      return {downsample_bicubic(img, spec.scale), img};
    case DegradationSpec::Kind::noise:
      return {add_gaussian_noise(img, spec.sigma, spec.seed), img};
    case DegradationSpec::Kind::second_order:
      return {add_gaussian_noise(downsample_bicubic(img, spec.scale), spec.sigma, spec.seed), img};
    case DegradationSpec::Kind::darken:
      return {darken(img, spec.factor, spec.gamma), img};
  }
  return {img, img};
}

}  // namespace air::data
