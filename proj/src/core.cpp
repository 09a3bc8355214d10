// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dualsplat {

Mat2 Mat2::rotation(double angle) {
    const double c = std::cos(angle);
    const double s = std::sin(angle);
    return {c, -s, s, c};
}

Mat2 Mat2::inverse() const {
    const double inv = 1.0 / det();
    return {d * inv, -b * inv, -c * inv, a * inv};
}

std::array<double, 2> symmetric_eigenvalues(const Mat2& m) {
    const double mid = 0.5 * (m.a + m.d);
    const double half_diff = 0.5 * (m.a - m.d);
    const double r = std::sqrt(half_diff * half_diff + m.b * m.c);
    return {mid + r, mid - r};
}

std::string_view attribute_name(Attribute a) {
    switch (a) {
    case Attribute::Position: return "position";
    case Attribute::Scale: return "scale";
    case Attribute::Rotation: return "rotation";
    case Attribute::Opacity: return "opacity";
    case Attribute::Color: return "color";
    }
    return "?";
}

Attribute attribute_from_name(std::string_view name) {
    for (Attribute a : kAllAttributes)
        if (attribute_name(a) == name) return a;
    throw ContractError("unknown attribute: " + std::string(name));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double softplus(double x) {
    // log(1 + e^x) without overflow for large x.
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

void GaussianCloud::resize(std::size_t n) {
    positions.resize(2 * n);
    log_scales.resize(2 * n);
    rotations.resize(n);
    opacity_logits.resize(n);
    colors.resize(3 * n);
    depths.resize(n);
    densify_r_max.resize(n);
    densify_grad_accum.resize(n);
    densify_count.resize(n);
    conflict_ema.resize(n);
}

std::vector<double>& GaussianCloud::param(Attribute a) {
    return const_cast<std::vector<double>&>(std::as_const(*this).param(a));
}

const std::vector<double>& GaussianCloud::param(Attribute a) const {
    switch (a) {
    case Attribute::Position: return positions;
    case Attribute::Scale: return log_scales;
    case Attribute::Rotation: return rotations;
    case Attribute::Opacity: return opacity_logits;
    case Attribute::Color: return colors;
    }
    throw ContractError("bad attribute");
}

double GaussianCloud::opacity(std::size_t i) const { return sigmoid(opacity_logits[i]); }

void GaussianCloud::append_from(const GaussianCloud& from, std::size_t src) {
    for (Attribute a : kAllAttributes) {
        const int k = arity(a);
        const auto& s = from.param(a);
        auto& d = param(a);
        d.insert(d.end(), s.begin() + static_cast<std::ptrdiff_t>(k * src),
                 s.begin() + static_cast<std::ptrdiff_t>(k * (src + 1)));
    }
    depths.push_back(from.depths[src]);
    densify_r_max.push_back(from.densify_r_max[src]);
    densify_grad_accum.push_back(from.densify_grad_accum[src]);
    densify_count.push_back(from.densify_count[src]);
    conflict_ema.push_back(from.conflict_ema[src]);
}

GradientBundle GradientBundle::zeros(std::size_t n) {
    GradientBundle b;
    for (Attribute a : kAllAttributes) b[a].assign(arity(a) * n, 0.0);
    b.view_space_pos.assign(2 * n, 0.0);
    return b;
}

Mat2 build_covariance(Vec2 log_scale, double rotation) {
    const Mat2 r = Mat2::rotation(rotation);
    const Mat2 s2 = Mat2::diag(std::exp(2.0 * log_scale.x), std::exp(2.0 * log_scale.y));
    Mat2 cov = r * s2 * r.transpose();
    // Symmetrize exactly; the product can differ in the last bit.
    const double off = 0.5 * (cov.b + cov.c);
    cov.b = cov.c = off;
    return cov;
}

std::vector<Violation> validate_cloud(const GaussianCloud& cloud) {
    std::vector<Violation> out;
    const std::size_t n = cloud.size();
    auto check_len = [&](std::size_t len, std::size_t expected, const char* field) {
        if (len != expected) out.push_back({kCloudLevel, field});
    };
    check_len(cloud.positions.size(), 2 * n, "position");
    check_len(cloud.log_scales.size(), 2 * n, "scale");
    check_len(cloud.opacity_logits.size(), n, "opacity");
    check_len(cloud.colors.size(), 3 * n, "color");
    check_len(cloud.depths.size(), n, "depth");
    check_len(cloud.densify_r_max.size(), n, "densify_r_max");
    check_len(cloud.densify_grad_accum.size(), n, "densify_grad_accum");
    check_len(cloud.densify_count.size(), n, "densify_count");
    check_len(cloud.conflict_ema.size(), n, "conflict_ema");
    if (!out.empty()) return out;

    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(cloud.positions[2 * i]) || !std::isfinite(cloud.positions[2 * i + 1]))
            out.push_back({i, "position"});
        const double s0 = std::exp(cloud.log_scales[2 * i]);
        const double s1 = std::exp(cloud.log_scales[2 * i + 1]);
        if (!(s0 > 0.0) || !(s1 > 0.0) || !std::isfinite(s0) || !std::isfinite(s1))
            out.push_back({i, "scale"});
        if (!std::isfinite(cloud.rotations[i])) out.push_back({i, "rotation"});
        const double a = cloud.opacity(i);
        if (!(a > 0.0 && a < 1.0)) out.push_back({i, "opacity"});
        for (int c = 0; c < 3; ++c) {
            if (!std::isfinite(cloud.colors[3 * i + c])) {
                out.push_back({i, "color"});
                break;
            }
        }
        if (!std::isfinite(cloud.depths[i])) out.push_back({i, "depth"});
        if (!(cloud.densify_r_max[i] >= 0.0)) out.push_back({i, "densify_r_max"});
        if (!(cloud.densify_grad_accum[i] >= 0.0)) out.push_back({i, "densify_grad_accum"});
        if (cloud.densify_count[i] < 0) out.push_back({i, "densify_count"});
        if (!(cloud.conflict_ema[i] >= 0.0 && cloud.conflict_ema[i] <= 1.0))
            out.push_back({i, "conflict_ema"});
    }
    return out;
}

std::vector<std::size_t> depth_order(const GaussianCloud& cloud) {
    std::vector<std::size_t> order(cloud.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t l, std::size_t r) { return cloud.depths[l] < cloud.depths[r]; });
    return order;
}

}  // namespace dualsplat
