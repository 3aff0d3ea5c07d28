// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "rose/image.hpp"

namespace rose::metrics {

/// 10 log10(1 / MSE) over all channels; +infinity for identical images.
double psnr(const Image& a, const Image& b);

/// Mean SSIM over all valid 11x11 windows (Gaussian weights, sigma 1.5,
/// K1 = 0.01, K2 = 0.03, dynamic range 1) on the channel-mean grayscale.
/// Throws if either side is smaller than the window.
double ssim(const Image& a, const Image& b);

/// Mean of every channel of every pixel.
double mean_intensity(const Image& image);

}  // namespace rose::metrics
