// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dualsplat/checkpoint.hpp"
#include "dualsplat/config.hpp"
#include "dualsplat/harmonizer.hpp"
#include "dualsplat/masking.hpp"
#include "dualsplat/optimizer.hpp"
#include "dualsplat/renderer.hpp"
#include "dualsplat/rng.hpp"
#include "dualsplat/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace dualsplat {

/// Raised when a step produces a non-finite loss. The message names the
/// iteration and views; train() writes a diagnostic checkpoint before
/// rethrowing.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& what, std::int64_t iteration, int view_i, int view_j)
        : std::runtime_error(what), iteration(iteration), view_i(view_i), view_j(view_j) {}
    std::int64_t iteration;
    int view_i;
    int view_j;
};

struct TrainState {
    std::int64_t iteration = 0;
    GaussianCloud cloud;
    Predictor predictor;
    OptimizerState optimizer;
    Rng rng;

    friend bool operator==(const TrainState&, const TrainState&) = default;
};

/// Training views plus the ground-truth features the predictor reads.
struct TrainingData {
    std::vector<View> views;
    std::vector<FeatureGrid> gt_features;
};

TrainingData prepare_training_data(std::vector<View> views, const TrainConfig& cfg);

/// K0 Gaussians at stratified-jittered positions on a near-square grid,
/// isotropic scale, constant opacity, colors read from the first view's ground
/// truth at the projected position (nearest pixel, black when off-image) and
/// uniform random depths.
GaussianCloud initialize_cloud(const View& first_view, const TrainConfig& cfg, Rng& rng);

TrainState initialize_state(const TrainingData& data, const TrainConfig& cfg);

Checkpoint to_checkpoint(const TrainState& state);
TrainState from_checkpoint(const Checkpoint& ckpt, const TrainConfig& cfg);

/// Unordered pair drawn uniformly from the M = n(n-1)/2 pairs, returned with
/// i < j.
std::pair<int, int> sample_view_pair(Rng& rng, int num_views);

struct AttributeReport {
    double cos_theta = 0.0;
    double tau1 = 1.0;
    double tau2 = 1.0;
    double lambda_geo = 1.0;
    bool conflicted = false;

    friend bool operator==(const AttributeReport&, const AttributeReport&) = default;
};

struct StepReport {
    std::int64_t iteration = 0;  // index of the step that ran
    int view_i = 0;
    int view_j = -1;  // -1 in single-view mode
    double loss1 = 0.0;
    double loss2 = 0.0;
    double inc_loss = 0.0;  // summed predictor loss, 0 when the predictor is idle
    double mask_mean1 = 0.0;
    double mask_mean2 = 0.0;
    double conflict_mean = 0.0;  // mean instantaneous per-Gaussian conflict
    std::array<AttributeReport, kNumAttributes> attributes{};
    bool mask_from_score = false;  // false while the binary prior alone is used

    std::size_t gaussians_before = 0;
    std::size_t gaussians = 0;
    std::size_t clones = 0;
    std::size_t splits = 0;
    std::size_t prunes = 0;
    bool decayed = false;
    bool densified = false;
    bool pruned = false;

    friend bool operator==(const StepReport&, const StepReport&) = default;
};

/// Instrumentation callbacks. Every argument refers to data the step is about
/// to consume, so probes observe exactly what the optimizers see.
struct StepHooks {
    std::function<void(const GradientBundle& g1, const GradientBundle* g2, const HarmonizedGradients& combined)>
        on_gaussian_gradients;
    std::function<void(std::span<const double> grad)> on_predictor_gradient;
    /// Per view: the detached reconstruction mask and the detached residual
    /// target (empty when the predictor is idle).
    std::function<void(int view, const Image& mask, const Image& residual)> on_view;
};

/// Whether the mask source at this iteration uses the consistency score.
bool uses_score(const TrainConfig& cfg, std::int64_t iteration);
/// Whether the predictor is trained at all in this configuration.
bool trains_predictor(const TrainConfig& cfg);

/// Reconstruction mask for one view (H x W x 1).
Image build_mask(const TrainConfig& cfg, std::int64_t iteration, const Image& prior_mask, const Image* sigma_grid);

/// One iteration on views i and j (j = -1 in single-view mode). Advances
/// state.iteration by one.
StepReport train_step(TrainState& state, const TrainingData& data, int view_i, int view_j, const TrainConfig& cfg,
                      const StepHooks* hooks = nullptr);

struct TrainOptions {
    /// Run directory; empty disables file output. Receives `log`,
    /// `checkpoints/` and `renders/`.
    std::filesystem::path run_dir;
    std::vector<View> heldout;      // rendered to renders/ at the end
    std::ostream* log = nullptr;    // extra log sink
    std::function<void(const StepReport&)> on_step;
};

struct TrainResult {
    TrainState state;
    std::vector<StepReport> reports;
};

TrainResult train(const TrainingData& data, const TrainConfig& cfg, const TrainOptions& options = {});
TrainResult train(const TrainingData& data, TrainState state, const TrainConfig& cfg, const TrainOptions& options);

/// Log records, one line each, `key=value` separated by spaces with doubles in
/// %.17g.
std::string format_step_line(const StepReport& r);
std::string format_harmonizer_lines(const StepReport& r);
std::string format_structure_line(const StepReport& r);

/// Two-objective quadratic toy L_i(x) = 1/2 |x - c_i|^2 used to check the
/// first-order prediction L_j(x - eta g_i) - L_j(x) ~ -eta g_j . g_i.
struct TaylorCheck {
    double actual = 0.0;
    double predicted = 0.0;
    double remainder = 0.0;  // actual - predicted, exactly eta^2 |g_i|^2 / 2
};

TaylorCheck taylor_self_test(double eta);

}  // namespace dualsplat
