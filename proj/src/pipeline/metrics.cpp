// SPDX-License-Identifier: Apache-2.0
#include "air/pipeline/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace air::pipeline {
namespace {

void require_same(const data::Image& a, const data::Image& b, const char* who) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(who) + ": image shapes differ (" + std::to_string(a.channels) + "×" +
                     std::to_string(a.height) + "×" + std::to_string(a.width) + " vs " + std::to_string(b.channels) +
                     "×" + std::to_string(b.height) + "×" + std::to_string(b.width) + ")");
  }
}

constexpr int kWindow = 11;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> g{};
  double total = 0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Luma kept in f64; rgb_to_y rounds to f32 samples.
std::vector<double> luma(const data::Image& img) {
  if (img.channels == 1) return {img.pixels.begin(), img.pixels.end()};
  if (img.channels != 3) {
    throw ShapeError("ssim: expected 1 or 3 channels, got " + std::to_string(img.channels));
  }
  std::vector<double> y(static_cast<std::size_t>(img.height) * img.width);
  for (int i = 0; i < img.height; ++i)
    for (int j = 0; j < img.width; ++j)
      y[static_cast<std::size_t>(i) * img.width + j] =
          (65.738 * img.at(0, i, j) + 129.057 * img.at(1, i, j) + 25.064 * img.at(2, i, j)) / 255.0 + 16.0 / 255.0;
  return y;
}

// Valid-mode separable Gaussian filter of an h×w plane.
std::vector<double> filter_valid(const std::vector<double>& x, int h, int w) {
  static const auto g = gaussian_window();
  const int ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int c = 0; c < ow; ++c) {
      double acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * x[static_cast<std::size_t>(y) * w + c + k];
      rows[static_cast<std::size_t>(y) * ow + c] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int r = 0; r < oh; ++r)
    for (int c = 0; c < ow; ++c) {
      double acc = 0;
      for (int k = 0; k < kWindow; ++k) acc += g[k] * rows[static_cast<std::size_t>(r + k) * ow + c];
      out[static_cast<std::size_t>(r) * ow + c] = acc;
    }
  return out;
}

}  // namespace

data::Image rgb_to_y(const data::Image& img) {
  if (img.channels != 3) {
    throw ShapeError("rgb_to_y: expected 3 channels, got " + std::to_string(img.channels));
  }
  data::Image y(1, img.height, img.width);
  for (int i = 0; i < img.height; ++i)
    for (int j = 0; j < img.width; ++j) {
      const double v =
          (65.738 * img.at(0, i, j) + 129.057 * img.at(1, i, j) + 25.064 * img.at(2, i, j)) / 255.0 + 16.0 / 255.0;
      y.at(0, i, j) = static_cast<float>(v);
    }
  return y;
}

double psnr(const data::Image& a, const data::Image& b, PsnrMode mode) {
  require_same(a, b, "psnr");
  double mse = 0;
  std::size_t count = 0;
  if (mode == PsnrMode::y_channel) {
    if (a.channels != 3) throw ShapeError("psnr: y_channel mode needs 3 channels, got " + std::to_string(a.channels));
    // Luma in f64 straight from the RGB samples.
    for (int i = 0; i < a.height; ++i)
      for (int j = 0; j < a.width; ++j) {
        double d = 0;
        const double coef[3] = {65.738, 129.057, 25.064};
        for (int c = 0; c < 3; ++c) d += coef[c] * (double(a.at(c, i, j)) - double(b.at(c, i, j)));
        d /= 255.0;
        mse += d * d;
        ++count;
      }
  } else {
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
      const double d = double(a.pixels[i]) - double(b.pixels[i]);
      mse += d * d;
    }
    count = a.pixels.size();
  }
  mse /= static_cast<double>(count);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const data::Image& a, const data::Image& b) {
  require_same(a, b, "ssim");
  if (std::min(a.height, a.width) < kWindow) {
    throw ContractError("ssim: image " + std::to_string(a.height) + "×" + std::to_string(a.width) +
                        " is smaller than the 11×11 window");
  }
  const int h = a.height, w = a.width;
  const auto x = luma(a), y = luma(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w), my = filter_valid(y, h, w);
  const auto sxx = filter_valid(xx, h, w), syy = filter_valid(yy, h, w), sxy = filter_valid(xy, h, w);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return std::clamp(total / static_cast<double>(mx.size()), 0.0, 1.0);
}

}  // namespace air::pipeline
