// SPDX-License-Identifier: Apache-2.0
// Straight-line serial rasterizer. Every pixel visits every Gaussian in depth
// order, and the backward pass forms dC/dw from the explicit sum over later
// contributions instead of a running suffix.
#include "dualsplat/core.hpp"
#include "dualsplat/renderer.hpp"

#include <cmath>

namespace dualsplat::reference {

RenderOutput rasterize_forward(const GaussianCloud& cloud, const Camera2D& cam, const RenderSettings& settings) {
    const int W = cam.width;
    const int H = cam.height;
    RenderOutput out;
    out.width = W;
    out.height = H;
    out.image = Image(W, H, 3);
    out.projections = project(cloud, cam, settings);
    out.projected_radius.assign(cloud.size(), 0.0);
    for (std::size_t n = 0; n < cloud.size(); ++n) {
        if (out.projections[n].valid)
            out.projected_radius[n] = out.projections[n].radius;
        else
            ++out.degenerate_count;
    }
    const auto order = depth_order(cloud);
    const double cutoff2 = settings.cutoff_sigma * settings.cutoff_sigma;
    std::vector<char> seen(cloud.size(), 0);
    out.pixel_offsets.push_back(0);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double T = 1.0;
            for (std::size_t n : order) {
                const Projection& pr = out.projections[n];
                if (!pr.valid) continue;
                const double dx = x + 0.5 - pr.mean.x;
                const double dy = y + 0.5 - pr.mean.y;
                // Same footprint box test as the tiled kernel.
                if (std::abs(dx) > pr.extent.x || std::abs(dy) > pr.extent.y) continue;
                const double q = pr.conic.a * dx * dx + 2.0 * pr.conic.b * dx * dy + pr.conic.d * dy * dy;
                if (q > cutoff2) continue;
                const double raw = cloud.opacity(n) * std::exp(-0.5 * q);
                if (raw < settings.min_weight) continue;
                const bool clamped = raw > settings.weight_clamp;
                const double w = clamped ? settings.weight_clamp : raw;
                for (int k = 0; k < 3; ++k) out.image.at(x, y, k) += cloud.colors[3 * n + k] * w * T;
                out.contributions.push_back({static_cast<std::uint32_t>(n), clamped, w, T});
                seen[n] = 1;
                T *= 1.0 - w;
            }
            out.pixel_offsets.push_back(static_cast<std::uint32_t>(out.contributions.size()));
        }
    }
    for (std::size_t n = 0; n < cloud.size(); ++n)
        if (seen[n]) out.visible_set.push_back(static_cast<std::uint32_t>(n));
    return out;
}

GradientBundle rasterize_backward(const GaussianCloud& cloud, const Camera2D& cam, const RenderOutput& fwd,
                                  const Image& grad_image, const RenderSettings&) {
    const int W = cam.width;
    const int H = cam.height;
    if (grad_image.width != W || grad_image.height != H || grad_image.channels != 3)
        throw ContractError("reference::rasterize_backward: gradient image shape mismatch");
    std::vector<double> screen(detail::kScreenGradWidth * cloud.size(), 0.0);
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * W + x;
            const std::size_t b = fwd.pixel_offsets[p];
            const std::size_t e = fwd.pixel_offsets[p + 1];
            const double* g = &grad_image.data[grad_image.index(x, y)];
            for (std::size_t i = b; i < e; ++i) {
                const Contribution& ci = fwd.contributions[i];
                const std::size_t n = ci.gaussian;
                double* s = &screen[detail::kScreenGradWidth * n];
                // dC/dw_n = c_n T_n - sum_{m>n} c_m w_m T_m / (1 - w_n)
                double dC_dw[3];
                for (int k = 0; k < 3; ++k) dC_dw[k] = cloud.colors[3 * n + k] * ci.transmittance;
                for (std::size_t j = i + 1; j < e; ++j) {
                    const Contribution& cj = fwd.contributions[j];
                    for (int k = 0; k < 3; ++k)
                        dC_dw[k] -= cloud.colors[3 * cj.gaussian + k] * cj.weight * cj.transmittance / (1.0 - ci.weight);
                }
                for (int k = 0; k < 3; ++k) s[6 + k] += ci.weight * ci.transmittance * g[k];
                if (ci.clamped) continue;
                const double dL_dw = dC_dw[0] * g[0] + dC_dw[1] * g[1] + dC_dw[2] * g[2];
                const Projection& pr = fwd.projections[n];
                const double dx = x + 0.5 - pr.mean.x;
                const double dy = y + 0.5 - pr.mean.y;
                const double alpha = cloud.opacity(n);
                // dw/dlogit = w (1 - alpha);  dw/dmean = w K d;  dw/dK = -w/2 d d^T
                s[5] += dL_dw * ci.weight * (1.0 - alpha);
                s[0] += dL_dw * ci.weight * (pr.conic.a * dx + pr.conic.b * dy);
                s[1] += dL_dw * ci.weight * (pr.conic.c * dx + pr.conic.d * dy);
                s[2] += -0.5 * dL_dw * ci.weight * dx * dx;
                s[3] += -0.5 * dL_dw * ci.weight * dx * dy;
                s[4] += -0.5 * dL_dw * ci.weight * dy * dy;
            }
        }
    }
    return detail::chain_to_parameters(cloud, cam, fwd.projections, screen);
}

}  // namespace dualsplat::reference
