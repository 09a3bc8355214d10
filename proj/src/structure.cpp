// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/structure.hpp"

#include <algorithm>
#include <cmath>

namespace dualsplat {

void accumulate_densify_stats(GaussianCloud& cloud, std::span<const DensifyInput> views) {
    const std::size_t N = cloud.size();
    for (const DensifyInput& v : views) {
        if (v.render->projected_radius.size() != N || v.bundle->gaussian_count() != N)
            throw ContractError("accumulate_densify_stats: bundle or render does not match the cloud");
    }
    for (const DensifyInput& v : views) {
        for (std::uint32_t n : v.render->visible_set) {
            cloud.densify_r_max[n] = std::max(cloud.densify_r_max[n], v.render->projected_radius[n]);
            const Vec2 g = v.bundle->view_space(n);
            cloud.densify_grad_accum[n] += std::abs(v.tau) * std::hypot(g.x, g.y);
            cloud.densify_count[n] += 1;
        }
    }
}

void accumulate_densify_stats(GaussianCloud& cloud, const RenderOutput& render1, const RenderOutput& render2,
                              const GradientBundle& bundle1, const GradientBundle& bundle2, double tau1, double tau2) {
    const DensifyInput views[2] = {{&render1, &bundle1, tau1}, {&render2, &bundle2, tau2}};
    accumulate_densify_stats(cloud, views);
}

namespace {

void reset_accumulators(GaussianCloud& c) {
    std::fill(c.densify_r_max.begin(), c.densify_r_max.end(), 0.0);
    std::fill(c.densify_grad_accum.begin(), c.densify_grad_accum.end(), 0.0);
    std::fill(c.densify_count.begin(), c.densify_count.end(), 0);
}

}  // namespace

StructureEdit densify(const GaussianCloud& cloud, const DensifyOptions& opt, std::span<const double> position_grad,
                      Rng& rng) {
    const std::size_t N = cloud.size();
    if (!position_grad.empty() && position_grad.size() != 2 * N)
        throw ContractError("densify: position gradient does not match the cloud");

    enum class Action : char { Keep, Clone, Split };
    std::vector<Action> action(N, Action::Keep);
    std::size_t projected = N;
    for (std::size_t n = 0; n < N; ++n) {
        if (cloud.densify_count[n] == 0) continue;
        const double mean = cloud.densify_grad_accum[n] / static_cast<double>(cloud.densify_count[n]);
        if (!(mean > opt.grad_threshold)) continue;
        if (cloud.densify_r_max[n] <= opt.size_threshold) {
            if (projected + 1 > opt.max_gaussians) continue;
            action[n] = Action::Clone;
            projected += 1;
        } else {
            if (projected + 1 > opt.max_gaussians) continue;
            action[n] = Action::Split;
            projected += 1;  // +2 children, -1 parent
        }
    }

    StructureEdit edit;
    for (std::size_t n = 0; n < N; ++n) {
        if (action[n] == Action::Split) continue;
        edit.cloud.append_from(cloud, n);
        edit.origin.push_back(static_cast<std::int64_t>(n));
    }
    auto jitter = [&] { return rng.uniform(-1e-6, 1e-6); };
    for (std::size_t n = 0; n < N; ++n) {
        if (action[n] != Action::Clone) continue;
        edit.cloud.append_from(cloud, n);
        const std::size_t c = edit.cloud.size() - 1;
        if (!position_grad.empty()) {
            const double gx = position_grad[2 * n];
            const double gy = position_grad[2 * n + 1];
            const double len = std::hypot(gx, gy);
            if (len > 0.0) {
                edit.cloud.positions[2 * c] -= opt.clone_offset * gx / len;
                edit.cloud.positions[2 * c + 1] -= opt.clone_offset * gy / len;
            }
        }
        edit.cloud.depths[c] += jitter();
        edit.origin.push_back(-1);
        ++edit.clones;
    }
    for (std::size_t n = 0; n < N; ++n) {
        if (action[n] != Action::Split) continue;
        const Vec2 ls = cloud.log_scale(n);
        const double s0 = std::exp(ls.x);
        const double s1 = std::exp(ls.y);
        const double cs = std::cos(cloud.rotations[n]);
        const double sn = std::sin(cloud.rotations[n]);
        const double shrink = std::log(opt.split_divisor);
        for (int child = 0; child < 2; ++child) {
            edit.cloud.append_from(cloud, n);
            const std::size_t c = edit.cloud.size() - 1;
            const double z0 = rng.normal() * s0;
            const double z1 = rng.normal() * s1;
            edit.cloud.positions[2 * c] += cs * z0 - sn * z1;
            edit.cloud.positions[2 * c + 1] += sn * z0 + cs * z1;
            edit.cloud.log_scales[2 * c] = ls.x - shrink;
            edit.cloud.log_scales[2 * c + 1] = ls.y - shrink;
            edit.cloud.depths[c] += jitter();
            edit.origin.push_back(-1);
        }
        ++edit.splits;
    }
    reset_accumulators(edit.cloud);
    return edit;
}

std::vector<double> instantaneous_conflict(const GradientBundle& b1, const GradientBundle& b2) {
    const std::size_t N = b1.gaussian_count();
    if (b2.gaussian_count() != N || b1[Attribute::Position].size() != 2 * N ||
        b2[Attribute::Position].size() != 2 * N || b1[Attribute::Opacity].size() != N ||
        b2[Attribute::Opacity].size() != N)
        throw ContractError("instantaneous_conflict: bundle size mismatch");
    constexpr double eps = 1e-12;
    std::vector<double> C(N, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        const auto p1 = b1.position_grad(n);
        const auto p2 = b2.position_grad(n);
        const double n1 = std::hypot(p1[0], p1[1]);
        const double n2 = std::hypot(p2[0], p2[1]);
        double c_pos = 0.0;
        if (n1 >= eps && n2 >= eps) c_pos = std::max(0.0, -(p1[0] * p2[0] + p1[1] * p2[1]) / (n1 * n2));
        const double o1 = b1.opacity_grad(n);
        const double o2 = b2.opacity_grad(n);
        double c_opa = 0.0;
        // Scalar cosine is the sign of the product.
        if (std::abs(o1) >= eps && std::abs(o2) >= eps && o1 * o2 < 0.0) c_opa = 1.0;
        C[n] = std::min(1.0, std::max(c_pos, c_opa));
    }
    return C;
}

void update_conflict_ema(GaussianCloud& cloud, std::span<const double> conflict, double gamma) {
    if (conflict.size() != cloud.size()) throw ContractError("update_conflict_ema: size mismatch");
    for (std::size_t n = 0; n < cloud.size(); ++n) {
        const double h = gamma * cloud.conflict_ema[n] + (1.0 - gamma) * conflict[n];
        cloud.conflict_ema[n] = std::clamp(h, 0.0, 1.0);
    }
}

void apply_conflict_decay(GaussianCloud& cloud, double lambda_prune) {
    for (std::size_t n = 0; n < cloud.size(); ++n) {
        const double a = std::max(cloud.opacity(n) * std::exp(-lambda_prune * cloud.conflict_ema[n]), 1e-6);
        cloud.opacity_logits[n] = logit(a);
    }
}

bool update_conflict_ema_and_decay(GaussianCloud& cloud, std::span<const double> conflict, double gamma,
                                   double lambda_prune, std::int64_t iteration, int decay_interval) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw ContractError("update_conflict_ema_and_decay: gamma not in (0,1)");
    update_conflict_ema(cloud, conflict, gamma);
    if (decay_interval > 0 && iteration % decay_interval == 0) {
        apply_conflict_decay(cloud, lambda_prune);
        return true;
    }
    return false;
}

StructureEdit prune(const GaussianCloud& cloud, double opacity_threshold) {
    StructureEdit edit;
    for (std::size_t n = 0; n < cloud.size(); ++n) {
        if (cloud.opacity(n) < opacity_threshold) {
            ++edit.prunes;
            continue;
        }
        edit.cloud.append_from(cloud, n);
        edit.origin.push_back(static_cast<std::int64_t>(n));
    }
    if (edit.cloud.size() == 0) throw EmptyCloudError();
    reset_accumulators(edit.cloud);
    return edit;
}

}  // namespace dualsplat
