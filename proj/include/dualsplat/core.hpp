// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dualsplat/types.hpp"

#include <string>
#include <vector>

namespace dualsplat {

/// Sigma = R diag(exp(2 * log_scale)) R^T.
Mat2 build_covariance(Vec2 log_scale, double rotation);

struct Violation {
    std::size_t index;  // Gaussian index, or SIZE_MAX for cloud-level problems
    std::string field;

    friend bool operator==(const Violation&, const Violation&) = default;
};

inline constexpr std::size_t kCloudLevel = static_cast<std::size_t>(-1);

/// Lists every broken GaussianCloud invariant; empty means valid.
std::vector<Violation> validate_cloud(const GaussianCloud& cloud);

/// Indices sorted front-to-back: by depth, ties by index.
std::vector<std::size_t> depth_order(const GaussianCloud& cloud);

}  // namespace dualsplat
