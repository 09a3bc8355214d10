// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/harmonizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dualsplat {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace

ConflictCheck detect_conflict(std::span<const double> g1, std::span<const double> g2) {
    if (g1.size() != g2.size()) throw ContractError("detect_conflict: length mismatch");
    const double n1 = norm(g1);
    const double n2 = norm(g2);
    if (n1 < kHarmonizeNormEps || n2 < kHarmonizeNormEps) return {0.0, false};
    const double d = dot(g1, g2);
    return {std::clamp(d / (n1 * n2), -1.0, 1.0), d < 0.0};
}

std::optional<std::pair<double, double>> tau_coefficients(double norm1, double norm2, double theta, double beta) {
    const double s = std::sin(theta);
    if (s < kHarmonizeSinEps) return std::nullopt;
    const double tau1 = std::sin(theta - beta) / s - norm2 * std::cos(theta - beta) / (norm1 * s);
    const double tau2 = norm1 * std::sin(beta) / (norm2 * s) + std::cos(beta) / s;
    return std::pair{tau1, tau2};
}

double geometric_attenuation(double cos_theta, double k) { return std::exp(-k * std::max(0.0, -cos_theta)); }

HarmonizedPair harmonize_pair(std::span<const double> g1, std::span<const double> g2, double rho) {
    if (g1.size() != g2.size()) throw ContractError("harmonize_pair: length mismatch");
    if (!(rho >= 0.0 && rho <= 1.0)) throw ContractError("harmonize_pair: rho not in [0,1]");
    HarmonizedPair out{{g1.begin(), g1.end()}, {g2.begin(), g2.end()}, {}};

    const double n1 = norm(g1);
    const double n2 = norm(g2);
    if (n1 < kHarmonizeNormEps || n2 < kHarmonizeNormEps) return out;
    const double d = dot(g1, g2);
    out.result.cos_theta = std::clamp(d / (n1 * n2), -1.0, 1.0);
    if (!(d < 0.0)) {
        out.result.theta = std::acos(out.result.cos_theta);
        return out;
    }
    out.result.conflicted = true;

    const std::size_t dim = g1.size();
    std::vector<double> u1(dim), u2(dim);
    for (std::size_t i = 0; i < dim; ++i) u1[i] = g1[i] / n1;
    // Component of g2 orthogonal to u1.
    const double along = dot(g2, u1);
    for (std::size_t i = 0; i < dim; ++i) u2[i] = g2[i] - along * u1[i];
    const double ortho = norm(u2);
    // atan2 stays accurate near theta = pi where acos does not.
    const double theta = std::atan2(ortho / n2, along / n2);
    const double sin_theta = ortho / n2;

    if (sin_theta < kHarmonizeSinEps) {
        out.result.degenerate = true;
        std::size_t probe = 0;
        for (std::size_t i = 1; i < dim; ++i)
            if (std::abs(u1[i]) < std::abs(u1[probe])) probe = i;
        std::fill(u2.begin(), u2.end(), 0.0);
        u2[probe] = 1.0;
        const double c = u1[probe];
        for (std::size_t i = 0; i < dim; ++i) u2[i] -= c * u1[i];
        const double pn = norm(u2);
        if (pn < kHarmonizeNormEps) {
            // One-dimensional attribute: no room to rotate.
            return out;
        }
        for (double& v : u2) v /= pn;
    } else {
        for (double& v : u2) v /= ortho;
    }
    // Second Gram-Schmidt pass against u1.
    {
        const double leak = dot(u2, u1);
        for (std::size_t i = 0; i < dim; ++i) u2[i] -= leak * u1[i];
        const double un = norm(u2);
        for (double& v : u2) v /= un;
    }

    const double beta = rho * (theta - std::numbers::pi / 2.0);
    const double cb = std::cos(beta);
    const double sb = std::sin(beta);
    for (std::size_t i = 0; i < dim; ++i) {
        out.g1[i] = n1 * (cb * u1[i] + sb * u2[i]);
        out.g2[i] = n2 * (-sb * u1[i] + cb * u2[i]);
    }
    out.result.theta = theta;
    out.result.beta = beta;
    if (out.result.degenerate) {
        out.result.tau1 = dot(out.g1, g1) / (n1 * n1);
        out.result.tau2 = dot(out.g2, g2) / (n2 * n2);
    } else {
        const auto tau = tau_coefficients(n1, n2, theta, beta);
        out.result.tau1 = tau->first;
        out.result.tau2 = tau->second;
    }
    return out;
}

HarmonizedGradients harmonize_bundles(const GradientBundle& b1, const GradientBundle& b2,
                                      const HarmonizerOptions& options) {
    HarmonizedGradients out;
    for (Attribute a : kAllAttributes) {
        const auto& g1 = b1[a];
        const auto& g2 = b2[a];
        if (g1.size() != g2.size()) throw ContractError("harmonize_bundles: bundle shape mismatch");
        auto& combined = out.combined[static_cast<int>(a)];
        auto& res = out.results[static_cast<int>(a)];
        combined.resize(g1.size());

        if (!options.enabled) {
            const ConflictCheck c = detect_conflict(g1, g2);
            res.cos_theta = c.cos_theta;
            res.conflicted = c.conflicted;
            res.theta = std::acos(c.cos_theta);
            for (std::size_t i = 0; i < g1.size(); ++i) combined[i] = g1[i] + g2[i];
            continue;
        }

        HarmonizedPair pair = harmonize_pair(g1, g2, options.rho);
        res = pair.result;
        if (res.conflicted && !res.degenerate) {
            for (std::size_t i = 0; i < g1.size(); ++i) combined[i] = res.tau1 * g1[i] + res.tau2 * g2[i];
        } else {
            // Passthrough or the explicit rotation for antiparallel pairs.
            for (std::size_t i = 0; i < g1.size(); ++i) combined[i] = pair.g1[i] + pair.g2[i];
        }
        if (is_geometric(a) && res.conflicted) {
            res.lambda_geo = geometric_attenuation(res.cos_theta, options.k_geo);
            for (double& v : combined) v *= res.lambda_geo;
        }
    }
    return out;
}

}  // namespace dualsplat
