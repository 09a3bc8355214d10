// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/cli.hpp"

#include "dualsplat/analysis.hpp"
#include "dualsplat/checkpoint.hpp"
#include "dualsplat/config.hpp"
#include "dualsplat/image_io.hpp"
#include "dualsplat/masking.hpp"
#include "dualsplat/renderer.hpp"
#include "dualsplat/synth.hpp"
#include "dualsplat/trainer.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>

namespace dualsplat {

namespace {

namespace fs = std::filesystem;

// A failure the user caused through arguments (exit 2) rather than at runtime.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string config;
    bool deterministic = false;
};

TrainConfig effective_config(const Globals& g, const fs::path& fallback_config = {}) {
    TrainConfig cfg;
    if (!g.config.empty())
        cfg = load_config(g.config);
    else if (!fallback_config.empty() && fs::exists(fallback_config))
        cfg = load_config(fallback_config);
    if (g.seed) cfg.seed = *g.seed;
    if (g.deterministic) cfg.deterministic = true;
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

// Two significant figures.
double round2sf(double x) {
    if (x == 0.0) return 0.0;
    const double mag = std::pow(10.0, std::floor(std::log10(std::abs(x))) - 1.0);
    return std::round(x / mag) * mag;
}

// Per training view: sigma grid (raw), S and M at image resolution (PNG and
// raw), with the mask source the trainer would use at the checkpoint's
// iteration.
void dump_masks(const Checkpoint& ckpt, const TrainConfig& cfg, const std::vector<View>& views, const fs::path& dir) {
    fs::create_directories(dir);
    Predictor pred;
    pred.inputs = kPatchFeatureChannels;
    pred.hidden = cfg.predictor_hidden;
    pred.weights = ckpt.predictor_weights;
    if (pred.weights.size() != Predictor::parameter_count(pred.inputs, pred.hidden))
        throw CheckpointError(CheckpointError::Kind::Corrupt, "predictor size does not match predictor_hidden");
    for (std::size_t k = 0; k < views.size(); ++k) {
        const View& v = views[k];
        const Image sigma = predict_sigma(pred, extract_features(v.gt_image, cfg.feature_grid), cfg.delta0).sigma;
        const Image score = consistency_score(sigma, cfg.feature_grid, v.gt_image.width, v.gt_image.height, cfg.c_sigma);
        const Image mask = build_mask(cfg, ckpt.iteration, v.prior_mask, &sigma);
        char name[64];
        std::snprintf(name, sizeof name, "view_%03zu", k);
        const std::string stem = name;
        write_raw(sigma, dir / (stem + "_sigma.f64"));
        write_png(score, dir / (stem + "_score.png"));
        write_raw(score, dir / (stem + "_score.f64"));
        write_png(mask, dir / (stem + "_mask.png"));
        write_raw(mask, dir / (stem + "_mask.f64"));
    }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dual-view Gaussian splatting on synthetic in-the-wild data", "dualsplat"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "random seed (overrides the config)");
    app.add_option("--config", g.config, "config file (key = value lines)");
    app.add_flag("--deterministic", g.deterministic, "fixed-order reductions");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string synth_out;
    SynthOptions so;
    std::string occlusion = "high";
    std::string illumination = "strong";
    bool sidecars = false;
    synth->add_option("--out", synth_out, "dataset directory")->required();
    synth->add_option("--views", so.num_views, "training views")->check(CLI::Range(2, 100000));
    synth->add_option("--heldout", so.num_heldout, "held-out views")->check(CLI::NonNegativeNumber);
    synth->add_option("--resolution", so.spec.resolution, "image side in pixels")->check(CLI::Range(32, 4096));
    synth->add_option("--occlusion", occlusion, "none | low | medium | high")
        ->check(CLI::IsMember({"none", "low", "medium", "high"}));
    synth->add_option("--illumination", illumination, "none | mild | strong")
        ->check(CLI::IsMember({"none", "mild", "strong"}));
    synth->add_flag("--float-sidecars", sidecars, "also store double-precision images");

    // train
    auto* train_cmd = app.add_subcommand("train", "train on a dataset");
    std::string train_data;
    std::string train_out;
    std::vector<std::string> sets;
    bool no_mask = false, bin_only = false, score_only = false, no_harm = false, no_struct = false, single = false;
    std::map<std::string, std::string> key_values;
    train_cmd->add_option("--data", train_data, "dataset directory")->required();
    train_cmd->add_option("--out", train_out, "run directory")->required();
    train_cmd->add_flag("--no-mask", no_mask, "train without reconstruction masks");
    train_cmd->add_flag("--bin-mask-only", bin_only, "use only the prior binary mask");
    train_cmd->add_flag("--score-mask-only", score_only, "use only the consistency score");
    train_cmd->add_flag("--no-harmonize", no_harm, "sum view gradients without harmonization");
    train_cmd->add_flag("--no-conflict-structure", no_struct, "plain densification and pruning");
    train_cmd->add_flag("--single-view", single, "one view per iteration");
    train_cmd->add_option("--set", sets, "key=value config override (repeatable)");
    for (const std::string& key : config_keys()) {
        if (key == "seed" || key == "deterministic") continue;  // global flags
        train_cmd->add_option("--" + key, key_values[key], config_key_help(key));
    }

    // render
    auto* render_cmd = app.add_subcommand("render", "render a checkpoint at a dataset view");
    std::string render_ckpt, render_data, render_out, render_raw;
    int render_view = -1;
    int render_heldout = -1;
    render_cmd->add_option("--checkpoint", render_ckpt, "checkpoint file")->required();
    render_cmd->add_option("--data", render_data, "dataset directory")->required();
    render_cmd->add_option("--out", render_out, "output PNG")->required();
    render_cmd->add_option("--raw", render_raw, "also write a raw float64 dump");
    auto* view_opt = render_cmd->add_option("--view", render_view, "training view index");
    auto* held_opt = render_cmd->add_option("--heldout", render_heldout, "held-out view index");
    view_opt->excludes(held_opt);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on held-out views");
    std::string eval_run, eval_ckpt, eval_data, eval_out, eval_tag, eval_masks;
    eval_cmd->add_option("--run", eval_run, "run directory (reads config and checkpoints/final.ckpt, writes report)");
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file");
    eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
    eval_cmd->add_option("--out", eval_out, "report file");
    eval_cmd->add_option("--tag", eval_tag, "row label (default: ablation tag of the config)");
    eval_cmd->add_option("--dump-masks", eval_masks,
                         "write per-training-view sigma, consistency score and reconstruction mask here");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "log and sampling analysis");
    analyze->require_subcommand(1);
    auto* conflicts = analyze->add_subcommand("conflicts", "per-attribute conflict probabilities from training logs");
    std::vector<std::string> logs;
    std::string csv_out;
    conflicts->add_option("logs", logs, "log files")->required()->check(CLI::ExistingFile);
    conflicts->add_option("--csv", csv_out, "plot data file");
    auto* coverage = analyze->add_subcommand("coverage", "pair coverage of uniform pair sampling");
    int cov_views = 0;
    double cov_target = 0.95;
    std::int64_t cov_iters = -1;
    coverage->add_option("--views", cov_views, "number of views")->required()->check(CLI::Range(2, 1 << 30));
    coverage->add_option("--target", cov_target, "coverage probability in (0,1)");
    coverage->add_option("--iterations", cov_iters, "also report P_cover at this T");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: usage: " << e.what() << '\n';
        err << app.help();
        return kExitUsage;
    }

    if (seed_opt->count() > 0) g.seed = seed_value;

    try {
        if (*synth) {
            so.seed = g.seed.value_or(0);
            so.occlusion = occlusion_from_name(occlusion);
            so.illumination = illumination_from_name(illumination);
            const Dataset d = synthesize(so);
            write_dataset(d, synth_out, sidecars);
            out << "dataset=" << synth_out << " views=" << d.views.size() << " heldout=" << d.heldout.size()
                << " seed=" << so.seed << '\n';
        } else if (*train_cmd) {
            TrainConfig cfg = effective_config(g);
            for (const auto& [key, value] : key_values)
                if (!value.empty()) set_config_value(cfg, key, value);
            for (const std::string& kv : sets) {
                const auto eq = kv.find('=');
                if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
                set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
            }
            if (static_cast<int>(no_mask) + bin_only + score_only > 1)
                throw UsageError("at most one of --no-mask, --bin-mask-only, --score-mask-only");
            if (no_mask) cfg.mask_mode = MaskMode::None;
            if (bin_only) cfg.mask_mode = MaskMode::BinaryOnly;
            if (score_only) cfg.mask_mode = MaskMode::ScoreOnly;
            if (no_harm) cfg.harmonize = false;
            if (no_struct) cfg.conflict_structure = false;
            if (single) cfg.single_view = true;
            if (const auto errors = validate_config(cfg); !errors.empty()) throw UsageError(errors.front());

            const Dataset d = read_dataset(train_data);
            TrainOptions opts;
            opts.run_dir = train_out;
            opts.heldout = heldout_views(d);
            const TrainResult r = train(prepare_training_data(training_views(d), cfg), cfg, opts);
            out << "run=" << train_out << " tag=" << ablation_tag(cfg) << " iterations=" << r.state.iteration
                << " gaussians=" << r.state.cloud.size() << '\n';
        } else if (*render_cmd) {
            const TrainConfig cfg = effective_config(g);
            const Checkpoint ckpt = load_checkpoint(render_ckpt);
            const Dataset d = read_dataset(render_data);
            View view;
            if (render_heldout >= 0) {
                const auto hv = heldout_views(d);
                if (render_heldout >= static_cast<int>(hv.size())) throw UsageError("--heldout index out of range");
                view = hv[static_cast<std::size_t>(render_heldout)];
            } else {
                const auto tv = training_views(d);
                const int idx = std::max(render_view, 0);
                if (idx >= static_cast<int>(tv.size())) throw UsageError("--view index out of range");
                view = tv[static_cast<std::size_t>(idx)];
            }
            const RenderOutput r = rasterize_forward(ckpt.cloud, camera_of(view), render_settings(cfg));
            write_png(r.image, render_out);
            if (!render_raw.empty()) write_raw(r.image, render_raw);
            out << "render=" << render_out << '\n';
        } else if (*eval_cmd) {
            if (eval_run.empty() && eval_ckpt.empty()) throw UsageError("eval needs --run or --checkpoint");
            const fs::path run_dir = eval_run;
            const TrainConfig cfg = effective_config(g, eval_run.empty() ? fs::path{} : run_dir / "config");
            const fs::path ckpt_path = eval_ckpt.empty() ? run_dir / "checkpoints" / "final.ckpt" : fs::path(eval_ckpt);
            const Checkpoint ckpt = load_checkpoint(ckpt_path);
            const Dataset d = read_dataset(eval_data);
            const EvaluationReport rep =
                evaluate(ckpt.cloud, heldout_views(d), cfg, eval_tag.empty() ? ablation_tag(cfg) : eval_tag);
            const std::string text = format_report(rep);
            fs::path report_path = eval_out;
            if (report_path.empty() && !eval_run.empty()) report_path = run_dir / "report";
            if (!report_path.empty()) write_text(report_path, text);
            out << text;
            if (!eval_masks.empty()) dump_masks(ckpt, cfg, training_views(d), eval_masks);
        } else if (*conflicts) {
            std::vector<ConflictStats> runs;
            for (const std::string& l : logs) {
                ConflictStats s = conflict_statistics(fs::path(l));
                if (s.label.empty()) s.label = l;
                runs.push_back(std::move(s));
            }
            out << format_conflict_table(runs);
            if (!csv_out.empty()) write_text(csv_out, format_conflict_csv(runs));
        } else if (*coverage) {
            if (!(cov_target > 0.0 && cov_target < 1.0)) throw UsageError("--target must be in (0, 1)");
            const std::int64_t M = pair_count(cov_views);
            const CoverageIterations c = coverage_iterations(M, cov_target);
            const double coefficient = -std::log1p(-cov_target);
            char buf[256];
            std::snprintf(buf, sizeof buf, "M=%lld q=%.6g exact_T=%lld approx_T=%.6f rule=%.2gM rule_T=%.17g\n",
                          static_cast<long long>(M), cov_target, static_cast<long long>(c.exact), c.approx,
                          round2sf(coefficient), round2sf(coefficient) * static_cast<double>(M));
            out << buf;
            if (cov_iters >= 0) {
                const CoverageProbability p = pair_coverage(M, cov_iters);
                std::snprintf(buf, sizeof buf, "T=%lld p_exact=%.17g p_approx=%.17g\n",
                              static_cast<long long>(cov_iters), p.exact, p.approx);
                out << buf;
            }
        }
    } catch (const UsageError& e) {
        err << "error: usage: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "error: config: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ContractError& e) {
        err << "error: usage: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DatasetError& e) {
        err << "error: dataset: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const CheckpointError& e) {
        err << "error: checkpoint: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const TrainingError& e) {
        err << "error: training: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: runtime: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace dualsplat
