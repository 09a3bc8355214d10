// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/trainer.hpp"

#include "dualsplat/image_io.hpp"
#include "dualsplat/loss.hpp"
#include "dualsplat/structure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace dualsplat {

TrainingData prepare_training_data(std::vector<View> views, const TrainConfig& cfg) {
    TrainingData data;
    data.views = std::move(views);
    data.gt_features.reserve(data.views.size());
    for (const View& v : data.views) {
        if (v.gt_image.channels != 3) throw ContractError("training view must be RGB");
        if (!v.prior_mask.same_extent(v.gt_image) || v.prior_mask.channels != 1)
            throw ContractError("prior mask must be H x W x 1 and match its view");
        data.gt_features.push_back(extract_features(v.gt_image, cfg.feature_grid));
    }
    return data;
}

GaussianCloud initialize_cloud(const View& first_view, const TrainConfig& cfg, Rng& rng) {
    const int K = cfg.init_count;
    if (K <= 0) throw ContractError("init_count must be positive");
    const int rows = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(K))));
    const int cols = (K + rows - 1) / rows;
    const Camera2D cam = camera_of(first_view);
    const Image& gt = first_view.gt_image;

    GaussianCloud c;
    c.resize(static_cast<std::size_t>(K));
    const double ls = std::log(cfg.init_scale);
    for (int n = 0; n < K; ++n) {
        const int r = n / cols;
        const int q = n % cols;
        const double x = (q + rng.uniform()) / cols;
        const double y = (r + rng.uniform()) / rows;
        c.positions[2 * n] = x;
        c.positions[2 * n + 1] = y;
        c.log_scales[2 * n] = ls;
        c.log_scales[2 * n + 1] = ls;
        c.rotations[n] = 0.0;
        c.opacity_logits[n] = logit(cfg.init_opacity);
        c.depths[n] = rng.uniform();
        const Vec2 p = cam.to_pixels({x, y});
        const int px = static_cast<int>(std::floor(p.x));
        const int py = static_cast<int>(std::floor(p.y));
        for (int ch = 0; ch < 3; ++ch) {
            const bool inside = px >= 0 && py >= 0 && px < gt.width && py < gt.height;
            c.colors[3 * n + ch] = inside ? std::clamp(gt.at(px, py, ch), 0.0, 1.0) : 0.0;
        }
    }
    return c;
}

TrainState initialize_state(const TrainingData& data, const TrainConfig& cfg) {
    if (data.views.empty()) throw ContractError("no training views");
    TrainState s;
    Rng rng(cfg.seed);
    s.cloud = initialize_cloud(data.views.front(), cfg, rng);
    s.predictor = Predictor::create(kPatchFeatureChannels, cfg.predictor_hidden, rng);
    s.optimizer.init(s.cloud.size(), s.predictor.weights.size());
    s.rng = rng;
    return s;
}

Checkpoint to_checkpoint(const TrainState& state) {
    Checkpoint c;
    c.iteration = state.iteration;
    c.cloud = state.cloud;
    c.predictor_weights = state.predictor.weights;
    c.optimizer_state = state.optimizer;
    c.rng_seed = state.rng.seed();
    c.rng_counter = state.rng.counter();
    return c;
}

TrainState from_checkpoint(const Checkpoint& ckpt, const TrainConfig& cfg) {
    TrainState s;
    s.iteration = ckpt.iteration;
    s.cloud = ckpt.cloud;
    s.predictor.inputs = kPatchFeatureChannels;
    s.predictor.hidden = cfg.predictor_hidden;
    s.predictor.weights = ckpt.predictor_weights;
    if (s.predictor.weights.size() != Predictor::parameter_count(s.predictor.inputs, s.predictor.hidden))
        throw ContractError("checkpoint predictor does not match predictor_hidden");
    s.optimizer = ckpt.optimizer_state;
    s.rng = Rng(ckpt.rng_seed, ckpt.rng_counter);
    return s;
}

std::pair<int, int> sample_view_pair(Rng& rng, int num_views) {
    if (num_views < 2) throw ContractError("sample_view_pair: need at least two views");
    const auto n = static_cast<std::uint64_t>(num_views);
    auto k = rng.below(n * (n - 1) / 2);
    // Walk rows of the strict upper triangle.
    std::uint64_t i = 0;
    while (k >= n - 1 - i) {
        k -= n - 1 - i;
        ++i;
    }
    return {static_cast<int>(i), static_cast<int>(i + 1 + k)};
}

bool uses_score(const TrainConfig& cfg, std::int64_t iteration) {
    return (cfg.mask_mode == MaskMode::Full || cfg.mask_mode == MaskMode::ScoreOnly) &&
           iteration >= cfg.warmup_iters;
}

bool trains_predictor(const TrainConfig& cfg) {
    return cfg.mask_mode == MaskMode::Full || cfg.mask_mode == MaskMode::ScoreOnly;
}

Image build_mask(const TrainConfig& cfg, std::int64_t iteration, const Image& prior, const Image* sigma_grid) {
    const Image ones(prior.width, prior.height, 1, 1.0);
    switch (cfg.mask_mode) {
    case MaskMode::None: return ones;
    case MaskMode::BinaryOnly: return prior;
    case MaskMode::Full:
    case MaskMode::ScoreOnly: {
        if (!uses_score(cfg, iteration)) return cfg.mask_mode == MaskMode::Full ? prior : ones;
        if (sigma_grid == nullptr) throw ContractError("build_mask: score requested without sigma");
        const Image S = consistency_score(*sigma_grid, cfg.feature_grid, prior.width, prior.height, cfg.c_sigma);
        return combine_mask(S, cfg.mask_mode == MaskMode::Full ? prior : ones, cfg.eta_s, cfg.eta_t);
    }
    }
    return ones;
}

namespace {

struct ViewPass {
    Camera2D cam;
    RenderOutput render;
    Image mask;
    LossResult loss;
    GradientBundle grad;
    Image residual;
    double inc_loss = 0.0;
    std::vector<double> predictor_grad;
};

double mean_of(const Image& img) {
    double s = 0.0;
    for (double v : img.data) s += v;
    return img.data.empty() ? 0.0 : s / static_cast<double>(img.data.size());
}

ViewPass run_view(const TrainState& state, const TrainingData& data, int v, const TrainConfig& cfg,
                  const RenderSettings& rs) {
    const View& view = data.views[static_cast<std::size_t>(v)];
    ViewPass p;
    p.cam = camera_of(view);
    p.render = rasterize_forward(state.cloud, p.cam, rs);

    const bool predictor = trains_predictor(cfg);
    PredictorForward fwd;
    if (predictor) fwd = predict_sigma(state.predictor, data.gt_features[static_cast<std::size_t>(v)], cfg.delta0);
    // The mask is a value here: nothing flows back into the predictor.
    p.mask = build_mask(cfg, state.iteration, view.prior_mask, predictor ? &fwd.sigma : nullptr);
    p.loss = reconstruction_loss(p.render.image, view.gt_image, p.mask, cfg.lambda_rec, cfg.dssim_divisor);
    if (!std::isfinite(p.loss.loss)) return p;
    p.grad = rasterize_backward(state.cloud, p.cam, p.render, p.loss.grad, rs);

    if (predictor) {
        // E is built from the current render and treated as a constant target.
        const FeatureGrid fr = extract_features(p.render.image, cfg.feature_grid);
        p.residual = residual_target(p.render.image, view.gt_image, fr, data.gt_features[static_cast<std::size_t>(v)],
                                     cfg.s_sem);
        const PredictorLoss pl = predictor_loss(fwd.sigma, p.residual, cfg.lambda_inc, cfg.eps_inc);
        p.inc_loss = pl.loss;
        p.predictor_grad = predictor_backward(state.predictor, data.gt_features[static_cast<std::size_t>(v)], fwd,
                                              pl.grad_sigma, cfg.delta0);
    }
    return p;
}

double attribute_lr(const TrainConfig& cfg, Attribute a) {
    switch (a) {
    case Attribute::Position: return cfg.lr_position;
    case Attribute::Scale: return cfg.lr_scale;
    case Attribute::Rotation: return cfg.lr_rotation;
    case Attribute::Opacity: return cfg.lr_opacity;
    case Attribute::Color: return cfg.lr_color;
    }
    return 0.0;
}

void apply_edit(TrainState& state, StructureEdit&& edit) {
    state.optimizer.remap(edit.origin);
    state.cloud = std::move(edit.cloud);
}

}  // namespace

StepReport train_step(TrainState& state, const TrainingData& data, int view_i, int view_j, const TrainConfig& cfg,
                      const StepHooks* hooks) {
    const int nviews = static_cast<int>(data.views.size());
    const bool dual = view_j >= 0;
    if (view_i < 0 || view_i >= nviews || view_j >= nviews || view_i == view_j)
        throw ContractError("train_step: invalid view indices");
    if (data.gt_features.size() != data.views.size()) throw ContractError("train_step: training data not prepared");

    const RenderSettings rs = render_settings(cfg);
    StepReport rep;
    rep.iteration = state.iteration;
    rep.view_i = view_i;
    rep.view_j = view_j;
    rep.mask_from_score = uses_score(cfg, state.iteration);
    rep.gaussians_before = state.cloud.size();

    ViewPass p1 = run_view(state, data, view_i, cfg, rs);
    ViewPass p2;
    if (dual) p2 = run_view(state, data, view_j, cfg, rs);
    rep.loss1 = p1.loss.loss;
    rep.loss2 = dual ? p2.loss.loss : 0.0;
    if (!std::isfinite(rep.loss1) || !std::isfinite(rep.loss2)) {
        char msg[160];
        std::snprintf(msg, sizeof msg, "non-finite loss at iteration %lld (views %d,%d)",
                      static_cast<long long>(state.iteration), view_i, view_j);
        throw TrainingError(msg, state.iteration, view_i, view_j);
    }
    rep.mask_mean1 = mean_of(p1.mask);
    rep.mask_mean2 = dual ? mean_of(p2.mask) : 0.0;
    rep.inc_loss = p1.inc_loss + (dual ? p2.inc_loss : 0.0);
    if (hooks && hooks->on_view) {
        hooks->on_view(view_i, p1.mask, p1.residual);
        if (dual) hooks->on_view(view_j, p2.mask, p2.residual);
    }

    // Per-Gaussian conflict and its running average, on raw gradients.
    if (dual && cfg.conflict_structure) {
        const std::vector<double> C = instantaneous_conflict(p1.grad, p2.grad);
        double s = 0.0;
        for (double c : C) s += c;
        rep.conflict_mean = C.empty() ? 0.0 : s / static_cast<double>(C.size());
        update_conflict_ema(state.cloud, C, cfg.gamma);
    }

    HarmonizedGradients combined;
    if (dual) {
        combined = harmonize_bundles(p1.grad, p2.grad, {cfg.rho, cfg.k_geo, cfg.harmonize});
    } else {
        for (Attribute a : kAllAttributes) combined.combined[static_cast<int>(a)] = p1.grad[a];
    }
    for (Attribute a : kAllAttributes) {
        const HarmonizationResult& r = combined.result(a);
        rep.attributes[static_cast<int>(a)] = {r.cos_theta, r.tau1, r.tau2, r.lambda_geo, r.conflicted};
    }
    if (hooks && hooks->on_gaussian_gradients) hooks->on_gaussian_gradients(p1.grad, dual ? &p2.grad : nullptr, combined);

    // Gaussian parameters: one harmonized gradient per group.
    state.optimizer.step += 1;
    for (Attribute a : kAllAttributes) {
        const AdamHyper h{attribute_lr(cfg, a), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
        adam_update(state.cloud.param(a), combined[a], state.optimizer.group(a), h, state.optimizer.step);
    }
    for (double& c : state.cloud.colors) c = std::clamp(c, 0.0, 1.0);

    // Predictor: summed per-view inconsistency loss only.
    if (trains_predictor(cfg)) {
        std::vector<double> g = p1.predictor_grad;
        if (dual)
            for (std::size_t k = 0; k < g.size(); ++k) g[k] += p2.predictor_grad[k];
        if (hooks && hooks->on_predictor_gradient) hooks->on_predictor_gradient(g);
        const AdamHyper h{cfg.lr_predictor, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
        adam_update(state.predictor.weights, g, state.optimizer.predictor, h, state.optimizer.step);
    }

    // Densification statistics, modulated by the position coefficients.
    {
        const bool modulate = dual && cfg.conflict_structure;
        const AttributeReport& pos = rep.attributes[static_cast<int>(Attribute::Position)];
        const DensifyInput in[2] = {{&p1.render, &p1.grad, modulate ? pos.tau1 : 1.0},
                                    {&p2.render, &p2.grad, modulate ? pos.tau2 : 1.0}};
        accumulate_densify_stats(state.cloud, std::span<const DensifyInput>(in, dual ? 2 : 1));
    }

    const std::int64_t done = state.iteration + 1;
    if (cfg.densify_interval > 0 && done >= cfg.densify_start && done < cfg.densify_stop() &&
        done % cfg.densify_interval == 0) {
        DensifyOptions opt;
        opt.grad_threshold = cfg.densify_grad_threshold;
        opt.size_threshold = cfg.size_threshold();
        opt.split_divisor = cfg.split_divisor;
        opt.clone_offset = cfg.clone_offset;
        opt.max_gaussians = static_cast<std::size_t>(cfg.max_gaussians);
        StructureEdit edit = densify(state.cloud, opt, combined[Attribute::Position], state.rng);
        rep.clones = edit.clones;
        rep.splits = edit.splits;
        rep.densified = true;
        apply_edit(state, std::move(edit));
    }
    // Conflict decay follows the densification window, like other opacity edits.
    if (dual && cfg.conflict_structure && cfg.decay_interval > 0 && done < cfg.densify_stop() &&
        done % cfg.decay_interval == 0) {
        apply_conflict_decay(state.cloud, cfg.lambda_prune);
        rep.decayed = true;
    }
    if (cfg.densify_interval > 0 && done % cfg.densify_interval == 0) {
        StructureEdit edit = prune(state.cloud, cfg.prune_opacity);
        rep.prunes = edit.prunes;
        rep.pruned = true;
        apply_edit(state, std::move(edit));
    }

    rep.gaussians = state.cloud.size();
    state.iteration = done;
    return rep;
}

namespace {

void append(std::string& out, const char* key, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " %s=%.17g", key, v);
    out += buf;
}

void append(std::string& out, const char* key, long long v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, " %s=%lld", key, v);
    out += buf;
}

}  // namespace

std::string format_step_line(const StepReport& r) {
    std::string s = "iter=" + std::to_string(r.iteration);
    append(s, "view_i", static_cast<long long>(r.view_i));
    append(s, "view_j", static_cast<long long>(r.view_j));
    append(s, "loss1", r.loss1);
    append(s, "loss2", r.loss2);
    append(s, "inc", r.inc_loss);
    append(s, "mask1", r.mask_mean1);
    append(s, "mask2", r.mask_mean2);
    append(s, "score_mask", static_cast<long long>(r.mask_from_score));
    append(s, "conflict", r.conflict_mean);
    append(s, "n", static_cast<long long>(r.gaussians));
    return s;
}

std::string format_harmonizer_lines(const StepReport& r) {
    std::string out;
    if (r.view_j < 0) return out;
    for (Attribute a : kAllAttributes) {
        const AttributeReport& ar = r.attributes[static_cast<int>(a)];
        out += "harm iter=" + std::to_string(r.iteration) + " attr=" + std::string(attribute_name(a));
        append(out, "cos", ar.cos_theta);
        append(out, "tau1", ar.tau1);
        append(out, "tau2", ar.tau2);
        append(out, "lambda_geo", ar.lambda_geo);
        append(out, "conflicted", static_cast<long long>(ar.conflicted));
        out += '\n';
    }
    return out;
}

std::string format_structure_line(const StepReport& r) {
    if (!r.densified && !r.pruned && !r.decayed) return {};
    std::string s = "struct iter=" + std::to_string(r.iteration);
    append(s, "clones", static_cast<long long>(r.clones));
    append(s, "splits", static_cast<long long>(r.splits));
    append(s, "prunes", static_cast<long long>(r.prunes));
    append(s, "n_before", static_cast<long long>(r.gaussians_before));
    append(s, "n_after", static_cast<long long>(r.gaussians));
    append(s, "decays", static_cast<long long>(r.decayed));
    return s;
}

TrainResult train(const TrainingData& data, const TrainConfig& cfg, const TrainOptions& options) {
    return train(data, initialize_state(data, cfg), cfg, options);
}

TrainResult train(const TrainingData& data, TrainState state, const TrainConfig& cfg, const TrainOptions& options) {
    if (const auto errors = validate_config(cfg); !errors.empty()) throw ConfigError("invalid config: " + errors.front());
    const int nviews = static_cast<int>(data.views.size());
    if (nviews < (cfg.single_view ? 1 : 2)) throw ContractError("train: dataset needs at least two views");

    std::ofstream logfile;
    const bool files = !options.run_dir.empty();
    if (files) {
        std::filesystem::create_directories(options.run_dir / "checkpoints");
        std::filesystem::create_directories(options.run_dir / "renders");
        save_config(cfg, options.run_dir / "config");
        logfile.open(options.run_dir / "log", std::ios::trunc);
        if (!logfile) throw IoError("cannot open log in " + options.run_dir.string());
    }
    auto emit = [&](const std::string& text) {
        if (text.empty()) return;
        const bool nl = text.back() == '\n';
        if (files) logfile << text << (nl ? "" : "\n");
        if (options.log) *options.log << text << (nl ? "" : "\n");
    };
    emit("# run " + ablation_tag(cfg) + " seed=" + std::to_string(cfg.seed));

    TrainResult result;
    result.reports.reserve(static_cast<std::size_t>(std::max<std::int64_t>(0, cfg.total_iters - state.iteration)));
    while (state.iteration < cfg.total_iters) {
        int i = 0;
        int j = -1;
        if (cfg.single_view) {
            i = static_cast<int>(state.rng.below(static_cast<std::uint64_t>(nviews)));
        } else {
            std::tie(i, j) = sample_view_pair(state.rng, nviews);
        }
        StepReport rep;
        try {
            rep = train_step(state, data, i, j, cfg);
        } catch (const TrainingError& e) {
            emit(std::string("error ") + e.what());
            if (files) save_checkpoint(options.run_dir / "checkpoints" / "failure.ckpt", to_checkpoint(state));
            throw;
        }
        emit(format_step_line(rep));
        emit(format_harmonizer_lines(rep));
        emit(format_structure_line(rep));
        if (options.on_step) options.on_step(rep);
        result.reports.push_back(rep);
        if (files && cfg.checkpoint_interval > 0 && state.iteration % cfg.checkpoint_interval == 0) {
            char name[64];
            std::snprintf(name, sizeof name, "iter_%06lld.ckpt", static_cast<long long>(state.iteration));
            save_checkpoint(options.run_dir / "checkpoints" / name, to_checkpoint(state));
        }
    }

    if (files) {
        save_checkpoint(options.run_dir / "checkpoints" / "final.ckpt", to_checkpoint(state));
        const RenderSettings rs = render_settings(cfg);
        for (std::size_t k = 0; k < options.heldout.size(); ++k) {
            const RenderOutput r = rasterize_forward(state.cloud, camera_of(options.heldout[k]), rs);
            char name[64];
            std::snprintf(name, sizeof name, "heldout_%03zu.png", k);
            write_png(r.image, options.run_dir / "renders" / name);
        }
    }
    result.state = std::move(state);
    return result;
}

TaylorCheck taylor_self_test(double eta) {
    // L_1 centered at c1, L_2 at c2; evaluated at x with conflicting gradients.
    const double c1[2] = {1.0, 0.0};
    const double c2[2] = {-1.0, 1.0};
    const double x[2] = {0.0, 0.0};
    auto L2 = [&](const double* p) {
        const double dx = p[0] - c2[0];
        const double dy = p[1] - c2[1];
        return 0.5 * (dx * dx + dy * dy);
    };
    const double g1[2] = {x[0] - c1[0], x[1] - c1[1]};
    const double g2[2] = {x[0] - c2[0], x[1] - c2[1]};
    const double stepped[2] = {x[0] - eta * g1[0], x[1] - eta * g1[1]};
    TaylorCheck t;
    t.actual = L2(stepped) - L2(x);
    t.predicted = -eta * (g2[0] * g1[0] + g2[1] * g1[1]);
    t.remainder = t.actual - t.predicted;
    return t;
}

}  // namespace dualsplat
