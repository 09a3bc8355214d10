// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dualsplat {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Source of the reconstruction mask.
enum class MaskMode {
    Full,        // binary prior refined by the consistency score
    None,        // no masking
    BinaryOnly,  // prior binary mask only
    ScoreOnly,   // consistency score only (prior treated as all-stable)
};

std::string_view mask_mode_name(MaskMode m);

/// Every hyperparameter of a training run.
///
/// Learning rates are desk-scale defaults for a 2D world in [0,1]^2 and a
/// 64x64 image; they are not taken from any 3D configuration.
struct TrainConfig {
    // Reconstruction objective.
    double lambda_rec = 0.25;
    double dssim_divisor = 1.0;  // DSSIM = (1 - SSIM) / divisor

    // Harmonization.
    double rho = 0.5;
    double k_geo = 0.5;

    // Masking.
    double s_sem = 0.5;
    double c_sigma = 0.2;
    double eta_s = 1.2;
    double eta_t = 3.0;
    double lambda_inc = 0.5;
    double delta0 = std::log(std::numbers::e - 1.0);
    double eps_inc = 1e-6;
    int feature_grid = 8;
    int predictor_hidden = 16;
    double lr_predictor = 0.001;

    // Conflict-guided pruning.
    double gamma = 0.99;
    double lambda_prune = 0.3;
    int decay_interval = 100;
    double prune_opacity = 0.005;

    // Schedule.
    int warmup_iters = 200;
    int total_iters = 2000;
    int densify_start = 100;
    double densify_stop_fraction = 0.6;
    int densify_interval = 100;
    double densify_grad_threshold = 2e-4;
    double densify_size_fraction = 0.05;  // size threshold = fraction * image width (pixels)
    double split_divisor = 1.6;
    double clone_offset = 0.01;  // fraction of the unit scene extent
    int max_gaussians = 4000;

    // Adam, per attribute.
    double lr_position = 2e-3;
    double lr_scale = 1e-2;
    double lr_rotation = 1e-2;
    double lr_opacity = 5e-2;
    double lr_color = 1e-2;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-15;

    // Initialization.
    int init_count = 200;
    double init_scale = 0.02;
    double init_opacity = 0.1;

    // Rasterization.
    int image_width = 64;
    int image_height = 64;
    double cutoff_sigma = 3.0;
    double weight_clamp = 0.999;
    double min_weight = 1.0 / 255.0;
    bool deterministic = true;

    // Ablations.
    MaskMode mask_mode = MaskMode::Full;
    bool harmonize = true;
    bool conflict_structure = true;
    bool single_view = false;

    // Bookkeeping.
    std::uint64_t seed = 0;
    int checkpoint_interval = 0;  // 0: final checkpoint only

    int densify_stop() const {
        return static_cast<int>(densify_stop_fraction * static_cast<double>(total_iters));
    }
    double size_threshold() const { return densify_size_fraction * image_width; }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// All recognized keys, in canonical order.
std::vector<std::string> config_keys();
std::string config_key_help(std::string_view key);

void set_config_value(TrainConfig& cfg, std::string_view key, std::string_view value);
std::string get_config_value(const TrainConfig& cfg, std::string_view key);

/// `key = value` lines; `#` starts a comment.
TrainConfig parse_config_text(std::string_view text, TrainConfig base = {});
std::string config_to_text(const TrainConfig& cfg);
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
void save_config(const TrainConfig& cfg, const std::filesystem::path& path);

/// Broken invariants, human readable; empty means valid.
std::vector<std::string> validate_config(const TrainConfig& cfg);

/// Short label naming the ablation ("full", "no-harmonize", ...).
std::string ablation_tag(const TrainConfig& cfg);

}  // namespace dualsplat
