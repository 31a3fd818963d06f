// SPDX-License-Identifier: Apache-2.0
//
// Image quality metrics on [0, 1] data.
#pragma once

#include "air/data/image.hpp"

namespace air::pipeline {

enum class PsnrMode { rgb, y_channel };

inline constexpr double kPsnrCap = 99.0;

/// BT.601 luma with studio offset: Y = (65.738·R + 129.057·G + 25.064·B + 16)/255.
data::Image rgb_to_y(const data::Image& img);

/// 10·log10(1/MSE), capped at kPsnrCap. y_channel compares luma (3-channel
/// inputs only); rgb compares every channel.
double psnr(const data::Image& a, const data::Image& b, PsnrMode mode);

/// Mean SSIM over all valid 11×11 windows (Gaussian weights, σ = 1.5) of the
/// luma of 3-channel inputs, or of the single channel otherwise. Clamped to
/// [0, 1].
double ssim(const data::Image& a, const data::Image& b);

}  // namespace air::pipeline
