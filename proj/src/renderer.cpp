// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/renderer.hpp"

#include "dualsplat/core.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>

namespace dualsplat {

Vec2 Camera2D::to_pixels(Vec2 x) const {
    const Vec2 v = affine * x;
    return {width * (v.x + translation.x), height * (v.y + translation.y)};
}

Camera2D camera_of(const View& view) {
    return {view.affine, view.translation, view.gt_image.width, view.gt_image.height};
}

RenderSettings render_settings(const TrainConfig& cfg) {
    RenderSettings s;
    s.cutoff_sigma = cfg.cutoff_sigma;
    s.weight_clamp = cfg.weight_clamp;
    s.min_weight = cfg.min_weight;
    s.deterministic = cfg.deterministic;
    return s;
}

bool RenderOutput::is_visible(std::size_t n) const {
    return std::binary_search(visible_set.begin(), visible_set.end(), static_cast<std::uint32_t>(n));
}

std::vector<Projection> project(const GaussianCloud& cloud, const Camera2D& cam, const RenderSettings& settings) {
    if (cam.affine.det() == 0.0) throw ContractError("project: view affine is singular");
    const Mat2 P = cam.pixel_affine();
    const Mat2 Pt = P.transpose();
    std::vector<Projection> out(cloud.size());
    for (std::size_t n = 0; n < cloud.size(); ++n) {
        Projection& pr = out[n];
        pr.mean = cam.to_pixels(cloud.position(n));
        Mat2 cov = P * build_covariance(cloud.log_scale(n), cloud.rotations[n]) * Pt;
        cov.b = cov.c = 0.5 * (cov.b + cov.c);
        pr.cov = cov;
        const auto eig = symmetric_eigenvalues(cov);
        if (!(eig[1] > 0.0) || !std::isfinite(eig[0]) || eig[0] > settings.max_condition * eig[1]) continue;
        pr.conic = cov.inverse();
        pr.conic.b = pr.conic.c = 0.5 * (pr.conic.b + pr.conic.c);
        pr.radius = settings.cutoff_sigma * std::sqrt(eig[0]);
        pr.extent = {settings.cutoff_sigma * std::sqrt(cov.a), settings.cutoff_sigma * std::sqrt(cov.d)};
        pr.valid = std::isfinite(pr.mean.x) && std::isfinite(pr.mean.y);
    }
    return out;
}

namespace {

struct PixelRange {
    int x0, x1, y0, y1;  // inclusive pixel index bounds
    bool empty() const { return x0 > x1 || y0 > y1; }
};

// Pixels whose centers (i + 0.5) fall inside the footprint's bounding box.
PixelRange footprint_pixels(const Projection& pr, int width, int height) {
    PixelRange r;
    r.x0 = std::max(0, static_cast<int>(std::ceil(pr.mean.x - pr.extent.x - 0.5)));
    r.x1 = std::min(width - 1, static_cast<int>(std::floor(pr.mean.x + pr.extent.x - 0.5)));
    r.y0 = std::max(0, static_cast<int>(std::ceil(pr.mean.y - pr.extent.y - 0.5)));
    r.y1 = std::min(height - 1, static_cast<int>(std::floor(pr.mean.y + pr.extent.y - 0.5)));
    return r;
}

void finalize_visibility(RenderOutput& out, std::size_t n) {
    std::vector<char> seen(n, 0);
    for (const Contribution& c : out.contributions) seen[c.gaussian] = 1;
    for (std::size_t i = 0; i < n; ++i)
        if (seen[i]) out.visible_set.push_back(static_cast<std::uint32_t>(i));
}

}  // namespace

RenderOutput rasterize_forward(const GaussianCloud& cloud, const Camera2D& cam, const RenderSettings& settings) {
    const int W = cam.width;
    const int H = cam.height;
    if (W <= 0 || H <= 0) throw ContractError("rasterize_forward: empty image");
    RenderOutput out;
    out.width = W;
    out.height = H;
    out.image = Image(W, H, 3);
    out.projections = project(cloud, cam, settings);
    out.projected_radius.assign(cloud.size(), 0.0);

    const auto order = depth_order(cloud);
    const int ts = settings.tile_size;
    const int tiles_x = (W + ts - 1) / ts;
    const int tiles_y = (H + ts - 1) / ts;
    std::vector<std::vector<std::uint32_t>> tiles(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::size_t n : order) {
        const Projection& pr = out.projections[n];
        if (!pr.valid) {
            ++out.degenerate_count;
            continue;
        }
        out.projected_radius[n] = pr.radius;
        const PixelRange r = footprint_pixels(pr, W, H);
        if (r.empty()) continue;
        for (int ty = r.y0 / ts; ty <= r.y1 / ts; ++ty)
            for (int tx = r.x0 / ts; tx <= r.x1 / ts; ++tx)
                tiles[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(n));
    }

    std::vector<double> alpha(cloud.size());
    for (std::size_t n = 0; n < cloud.size(); ++n) alpha[n] = cloud.opacity(n);

    const double cutoff2 = settings.cutoff_sigma * settings.cutoff_sigma;
    std::vector<std::vector<Contribution>> rows(H);
    std::vector<std::vector<std::uint32_t>> row_counts(H);

#pragma omp parallel for schedule(dynamic)
    for (int y = 0; y < H; ++y) {
        auto& contribs = rows[y];
        auto& counts = row_counts[y];
        counts.assign(W, 0);
        const double py = y + 0.5;
        for (int x = 0; x < W; ++x) {
            const double px = x + 0.5;
            const auto& list = tiles[static_cast<std::size_t>(y / ts) * tiles_x + x / ts];
            double T = 1.0;
            double rgb[3] = {0.0, 0.0, 0.0};
            for (std::uint32_t n : list) {
                const Projection& pr = out.projections[n];
                const double dx = px - pr.mean.x;
                const double dy = py - pr.mean.y;
                const double q = pr.conic.a * dx * dx + 2.0 * pr.conic.b * dx * dy + pr.conic.d * dy * dy;
                if (q > cutoff2) continue;
                const double raw = alpha[n] * std::exp(-0.5 * q);
                if (raw < settings.min_weight) continue;
                const bool clamped = raw > settings.weight_clamp;
                const double w = clamped ? settings.weight_clamp : raw;
                const double* c = &cloud.colors[3 * n];
                for (int k = 0; k < 3; ++k) rgb[k] += c[k] * w * T;
                contribs.push_back({n, clamped, w, T});
                ++counts[x];
                T *= 1.0 - w;
            }
            for (int k = 0; k < 3; ++k) out.image.at(x, y, k) = rgb[k];
        }
    }

    out.pixel_offsets.assign(static_cast<std::size_t>(W) * H + 1, 0);
    std::size_t total = 0;
    for (int y = 0; y < H; ++y) total += rows[y].size();
    out.contributions.reserve(total);
    std::size_t p = 0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x, ++p) out.pixel_offsets[p + 1] = out.pixel_offsets[p] + row_counts[y][x];
        out.contributions.insert(out.contributions.end(), rows[y].begin(), rows[y].end());
    }
    finalize_visibility(out, cloud.size());
    return out;
}

namespace detail {

void backprop_pixel(const GaussianCloud& cloud, const std::vector<Projection>& projections,
                    const Contribution* begin, const Contribution* end, double px, double py, const double* g,
                    double* screen) {
    // Walk back to front; `after` holds the color composited behind the
    // current contribution.
    double after[3] = {0.0, 0.0, 0.0};
    for (const Contribution* it = end; it != begin;) {
        --it;
        const std::size_t n = it->gaussian;
        const double w = it->weight;
        const double T = it->transmittance;
        const double* c = &cloud.colors[3 * n];
        double* s = screen + kScreenGradWidth * n;

        const double wT = w * T;
        s[6] += wT * g[0];
        s[7] += wT * g[1];
        s[8] += wT * g[2];
        const double c_dot_g = c[0] * g[0] + c[1] * g[1] + c[2] * g[2];
        const double after_dot_g = after[0] * g[0] + after[1] * g[1] + after[2] * g[2];
        const double dL_dw = T * c_dot_g - after_dot_g / (1.0 - w);
        for (int k = 0; k < 3; ++k) after[k] += c[k] * wT;
        if (it->clamped) continue;

        const Projection& pr = projections[n];
        const double dx = px - pr.mean.x;
        const double dy = py - pr.mean.y;
        const double alpha = sigmoid(cloud.opacity_logits[n]);
        const double dL_dwraw = dL_dw * w;
        s[5] += dL_dwraw * (1.0 - alpha);
        // q = d^T K d,  w = alpha exp(-q/2)
        s[0] += dL_dwraw * (pr.conic.a * dx + pr.conic.b * dy);
        s[1] += dL_dwraw * (pr.conic.c * dx + pr.conic.d * dy);
        const double dL_dq = -0.5 * dL_dwraw;
        s[2] += dL_dq * dx * dx;
        s[3] += dL_dq * dx * dy;
        s[4] += dL_dq * dy * dy;
    }
}

GradientBundle chain_to_parameters(const GaussianCloud& cloud, const Camera2D& cam,
                                   const std::vector<Projection>& projections, const std::vector<double>& screen) {
    const std::size_t N = cloud.size();
    GradientBundle b = GradientBundle::zeros(N);
    const Mat2 P = cam.pixel_affine();
    const Mat2 Pt = P.transpose();
    auto& g_pos = b[Attribute::Position];
    auto& g_scale = b[Attribute::Scale];
    auto& g_rot = b[Attribute::Rotation];
    auto& g_opa = b[Attribute::Opacity];
    auto& g_col = b[Attribute::Color];
    for (std::size_t n = 0; n < N; ++n) {
        const double* s = &screen[kScreenGradWidth * n];
        const Projection& pr = projections[n];
        if (!pr.valid) continue;
        b.view_space_pos[2 * n] = s[0];
        b.view_space_pos[2 * n + 1] = s[1];
        const Vec2 gx = Pt * Vec2{s[0], s[1]};
        g_pos[2 * n] = gx.x;
        g_pos[2 * n + 1] = gx.y;
        g_opa[n] = s[5];
        g_col[3 * n] = s[6];
        g_col[3 * n + 1] = s[7];
        g_col[3 * n + 2] = s[8];

        // Conic -> projected covariance -> world covariance.
        const Mat2 gK{s[2], s[3], s[3], s[4]};
        const Mat2 gCovPix = (pr.conic * gK * pr.conic) * -1.0;
        const Mat2 gCov = Pt * gCovPix * P;
        // Sigma = M M^T with M = R diag(s).
        const double th = cloud.rotations[n];
        const double cs = std::cos(th);
        const double sn = std::sin(th);
        const Mat2 R{cs, -sn, sn, cs};
        const Mat2 dR{-sn, -cs, cs, -sn};
        const double s0 = std::exp(cloud.log_scales[2 * n]);
        const double s1 = std::exp(cloud.log_scales[2 * n + 1]);
        const Mat2 M{R.a * s0, R.b * s1, R.c * s0, R.d * s1};
        const Mat2 gM = (gCov + gCov.transpose()) * M;
        g_scale[2 * n] = (gM.a * R.a + gM.c * R.c) * s0;
        g_scale[2 * n + 1] = (gM.b * R.b + gM.d * R.d) * s1;
        g_rot[n] = (gM.a * dR.a + gM.c * dR.c) * s0 + (gM.b * dR.b + gM.d * dR.d) * s1;
    }
    return b;
}

}  // namespace detail

GradientBundle rasterize_backward(const GaussianCloud& cloud, const Camera2D& cam, const RenderOutput& fwd,
                                  const Image& grad_image, const RenderSettings& settings) {
    const int W = cam.width;
    const int H = cam.height;
    if (grad_image.width != W || grad_image.height != H || grad_image.channels != 3 || fwd.width != W ||
        fwd.height != H)
        throw ContractError("rasterize_backward: gradient image shape does not match the render");
    if (fwd.projections.size() != cloud.size())
        throw ContractError("rasterize_backward: forward cache belongs to a different cloud");
    const std::size_t N = cloud.size();
    const std::size_t width = detail::kScreenGradWidth * N;
    std::vector<double> screen(width, 0.0);

    auto run_rows = [&](int y0, int y1, double* acc) {
        for (int y = y0; y < y1; ++y) {
            for (int x = 0; x < W; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * W + x;
                const Contribution* b = fwd.contributions.data() + fwd.pixel_offsets[p];
                const Contribution* e = fwd.contributions.data() + fwd.pixel_offsets[p + 1];
                if (b == e) continue;
                detail::backprop_pixel(cloud, fwd.projections, b, e, x + 0.5, y + 0.5,
                                       &grad_image.data[grad_image.index(x, y)], acc);
            }
        }
    };

    if (settings.deterministic) {
        // Fixed row blocks summed in block order: the result does not depend
        // on the thread count.
        const int rows = std::max(1, settings.block_rows);
        const int blocks = (H + rows - 1) / rows;
        std::vector<std::vector<double>> partial(blocks);
#pragma omp parallel for schedule(dynamic)
        for (int bi = 0; bi < blocks; ++bi) {
            partial[bi].assign(width, 0.0);
            run_rows(bi * rows, std::min(H, (bi + 1) * rows), partial[bi].data());
        }
        for (int bi = 0; bi < blocks; ++bi)
            for (std::size_t i = 0; i < width; ++i) screen[i] += partial[bi][i];
    } else {
#pragma omp parallel
        {
            std::vector<double> local(width, 0.0);
#pragma omp for schedule(dynamic) nowait
            for (int y = 0; y < H; ++y) run_rows(y, y + 1, local.data());
#pragma omp critical
            for (std::size_t i = 0; i < width; ++i) screen[i] += local[i];
        }
    }
    return detail::chain_to_parameters(cloud, cam, fwd.projections, screen);
}

}  // namespace dualsplat
