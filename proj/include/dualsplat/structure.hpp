// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dualsplat/renderer.hpp"
#include "dualsplat/rng.hpp"
#include "dualsplat/types.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace dualsplat {

class EmptyCloudError : public std::runtime_error {
public:
    EmptyCloudError() : std::runtime_error("empty cloud: pruning removed every Gaussian") {}
};

/// One view's contribution to the densification statistics.
struct DensifyInput {
    const RenderOutput* render;
    const GradientBundle* bundle;
    double tau = 1.0;  // position-attribute coefficient of this view
};

/// r_max <- max(r_max, r_i over views where visible);
/// grad_accum += sum over visible views of |tau_i dL_i/dp_view|;
/// count += number of views in which the Gaussian is visible.
void accumulate_densify_stats(GaussianCloud& cloud, std::span<const DensifyInput> views);

void accumulate_densify_stats(GaussianCloud& cloud, const RenderOutput& render1, const RenderOutput& render2,
                              const GradientBundle& bundle1, const GradientBundle& bundle2, double tau1, double tau2);

/// Result of a structure edit. origin[i] is the pre-edit index of Gaussian i
/// or -1 for a newly created child.
struct StructureEdit {
    GaussianCloud cloud;
    std::vector<std::int64_t> origin;
    std::size_t clones = 0;
    std::size_t splits = 0;
    std::size_t prunes = 0;
};

struct DensifyOptions {
    double grad_threshold = 2e-4;
    double size_threshold = 3.2;  // pixels, compared against r_max
    double split_divisor = 1.6;
    double clone_offset = 0.01;   // scene units
    std::size_t max_gaussians = 4000;
};

/// Clones small and splits large Gaussians whose mean accumulated gradient
/// exceeds the threshold. Clones are displaced by clone_offset against
/// `position_grad` (2N world-space gradient; may be empty for no offset).
/// Split children are sampled from the parent Gaussian with `rng`, get
/// scales / split_divisor and replace the parent. Every new Gaussian takes
/// the parent's depth plus uniform jitter in [-1e-6, 1e-6] and its
/// conflict_ema. All accumulators are reset.
///
/// Survivors keep their relative order and come first; clones then split
/// children follow in parent order.
StructureEdit densify(const GaussianCloud& cloud, const DensifyOptions& options, std::span<const double> position_grad,
                      Rng& rng);

/// C_n = max over {position, opacity} of max(0, -cos(g1_n, g2_n)); a pair
/// with either norm < 1e-12 contributes 0.
std::vector<double> instantaneous_conflict(const GradientBundle& bundle1, const GradientBundle& bundle2);

/// H <- gamma H + (1 - gamma) C.
void update_conflict_ema(GaussianCloud& cloud, std::span<const double> conflict, double gamma);

/// alpha <- max(alpha exp(-lambda_prune H), 1e-6), re-encoded as a logit.
void apply_conflict_decay(GaussianCloud& cloud, double lambda_prune);

/// EMA every call; decay when iteration % decay_interval == 0. Returns
/// whether the decay ran.
bool update_conflict_ema_and_decay(GaussianCloud& cloud, std::span<const double> conflict, double gamma,
                                   double lambda_prune, std::int64_t iteration, int decay_interval);

/// Removes Gaussians with opacity below the threshold and resets the
/// densification accumulators. Throws EmptyCloudError if nothing would remain.
StructureEdit prune(const GaussianCloud& cloud, double opacity_threshold);

}  // namespace dualsplat
