// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dualsplat/types.hpp"

#include <array>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace dualsplat {

/// Below this norm a gradient is treated as zero and passed through.
inline constexpr double kHarmonizeNormEps = 1e-12;
/// Below this sin(theta) the pair is treated as antiparallel.
inline constexpr double kHarmonizeSinEps = 1e-6;

struct ConflictCheck {
    double cos_theta = 0.0;
    bool conflicted = false;
};

/// cos of the angle between g1 and g2, and whether g1 . g2 < 0. Zero-norm
/// inputs are never conflicted.
ConflictCheck detect_conflict(std::span<const double> g1, std::span<const double> g2);

struct HarmonizationResult {
    double tau1 = 1.0;
    double tau2 = 1.0;
    double cos_theta = 0.0;
    double theta = 0.0;  // radians
    double beta = 0.0;   // rotation applied to g1
    bool conflicted = false;
    bool degenerate = false;  // antiparallel pair handled by the probe basis
    double lambda_geo = 1.0;
};

struct HarmonizedPair {
    std::vector<double> g1;
    std::vector<double> g2;
    HarmonizationResult result;
};

/// Rotates a conflicting pair inside span(g1, g2) until orthogonal, keeping
/// both norms: g1 turns by beta = rho (theta - pi/2), g2 by the remainder.
/// Non-conflicting pairs are returned unchanged.
///
/// An antiparallel pair (sin theta < kHarmonizeSinEps) has no well-defined
/// second basis vector; it is completed from the standard basis vector least
/// aligned with g1 (lowest index on ties). For such pairs tau_i is reported as
/// the projection coefficient <g~_i, g_i> / |g_i|^2.
HarmonizedPair harmonize_pair(std::span<const double> g1, std::span<const double> g2, double rho);

/// Weights with tau1 g1 + tau2 g2 = g~1 + g~2. Empty when sin theta is below
/// kHarmonizeSinEps.
std::optional<std::pair<double, double>> tau_coefficients(double norm1, double norm2, double theta, double beta);

/// exp(-k max(0, -cos_theta)).
double geometric_attenuation(double cos_theta, double k);

struct HarmonizerOptions {
    double rho = 0.5;
    double k_geo = 0.5;
    bool enabled = true;  // false: plain sum, conflicts still measured
};

struct HarmonizedGradients {
    std::array<std::vector<double>, kNumAttributes> combined;
    std::array<HarmonizationResult, kNumAttributes> results;

    const std::vector<double>& operator[](Attribute a) const { return combined[static_cast<int>(a)]; }
    const HarmonizationResult& result(Attribute a) const { return results[static_cast<int>(a)]; }
};

/// Harmonizes each attribute's flattened gradient independently and sums the
/// two views; geometric attributes are additionally scaled by lambda_geo.
HarmonizedGradients harmonize_bundles(const GradientBundle& b1, const GradientBundle& b2,
                                      const HarmonizerOptions& options);

}  // namespace dualsplat
