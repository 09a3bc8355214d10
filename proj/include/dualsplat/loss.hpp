// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dualsplat/types.hpp"

namespace dualsplat {

struct MaskedPair {
    Image render;
    Image gt;
};

/// Elementwise M * image for both images; the H x W x 1 mask broadcasts over
/// channels.
MaskedPair masked_images(const Image& render, const Image& gt, const Image& mask);

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

struct SsimResult {
    double value = 0.0;  // mean SSIM over pixels and channels
    Image grad;          // dSSIM / dA (empty unless requested)
};

/// SSIM with an 11x11 Gaussian window (sigma 1.5), zero padding, same-size
/// output, averaged over pixels and channels.
SsimResult ssim(const Image& a, const Image& b, bool with_grad = true);

struct LossResult {
    double loss = 0.0;
    double l1 = 0.0;
    double dssim = 0.0;
    Image grad;  // dL / drender
};

/// (1 - lambda) * mean|M*R - M*G| + lambda * (1 - SSIM(M*R, M*G)) / divisor.
LossResult reconstruction_loss(const Image& render, const Image& gt, const Image& mask, double lambda_rec,
                               double dssim_divisor = 1.0);

}  // namespace dualsplat
