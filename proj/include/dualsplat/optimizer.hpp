// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dualsplat/types.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace dualsplat {

struct AdamHyper {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-15;
};

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;

    void resize(std::size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
    friend bool operator==(const AdamMoments&, const AdamMoments&) = default;
};

/// One Adam update in place. `step` is the 1-based step count used for bias
/// correction.
void adam_update(std::span<double> params, std::span<const double> grad, AdamMoments& moments,
                 const AdamHyper& hyper, std::int64_t step);

/// Moments for every Gaussian parameter group plus the sigma predictor.
struct OptimizerState {
    std::array<AdamMoments, kNumAttributes> groups;
    AdamMoments predictor;
    std::int64_t step = 0;

    AdamMoments& group(Attribute a) { return groups[static_cast<int>(a)]; }
    const AdamMoments& group(Attribute a) const { return groups[static_cast<int>(a)]; }

    void init(std::size_t gaussians, std::size_t predictor_params);

    /// Re-indexes per-Gaussian moments after a structure edit. `origin[i]` is
    /// the old index of new Gaussian i, or -1 for a fresh child (zero moments).
    void remap(std::span<const std::int64_t> origin);

    friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

}  // namespace dualsplat
