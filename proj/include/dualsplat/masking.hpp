// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dualsplat/rng.hpp"
#include "dualsplat/types.hpp"

#include <filesystem>
#include <vector>

namespace dualsplat {

/// C x H' x W' feature map on a grid `grid_scale` times coarser than the image.
struct FeatureGrid {
    int channels = 0;
    int grid_width = 0;
    int grid_height = 0;
    int grid_scale = 1;
    std::vector<double> data;  // [cell][channel], cells row-major

    FeatureGrid() = default;
    FeatureGrid(int c, int gw, int gh, int scale)
        : channels(c), grid_width(gw), grid_height(gh), grid_scale(scale),
          data(static_cast<std::size_t>(c) * gw * gh, 0.0) {}

    std::size_t cells() const { return static_cast<std::size_t>(grid_width) * grid_height; }
    double& at(int gx, int gy, int c) { return data[(static_cast<std::size_t>(gy) * grid_width + gx) * channels + c]; }
    double at(int gx, int gy, int c) const {
        return data[(static_cast<std::size_t>(gy) * grid_width + gx) * channels + c];
    }
    const double* cell(std::size_t i) const { return data.data() + i * channels; }

    friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;
};

inline constexpr int kPatchFeatureChannels = 12;

/// Fixed standardization applied by the patch-statistics extractor: channel
/// means are kept as is, standard deviations are multiplied by
/// kStdFeatureScale and gradient energies by kEnergyFeatureScale.
inline constexpr double kStdFeatureScale = 2.0;
inline constexpr double kEnergyFeatureScale = 20.0;

/// Deterministic patch-statistics features, 12 channels per cell:
///   0..2   per-channel mean
///   3..5   per-channel standard deviation
///   6..11  gradient energy of the luminance in six orientation bins over
///          [0, pi), central differences with edge clamping
/// Images whose sides are not multiples of grid_scale are reflect-padded
/// (edge pixel not repeated) up to the next multiple, so the grid has
/// ceil(H / grid_scale) x ceil(W / grid_scale) cells.
FeatureGrid extract_features(const Image& image, int grid_scale = 8);

/// Feature file: magic "DSFEAT\0\0", int32 channels, grid_width, grid_height,
/// grid_scale, then little-endian doubles in [cell][channel] order.
void write_feature_file(const FeatureGrid& grid, const std::filesystem::path& path);
FeatureGrid read_feature_file(const std::filesystem::path& path);

/// Location-wise MLP  C -> hidden (tanh) -> 1.
///
/// Flat weight layout: W1 (hidden x C, row-major), b1 (hidden), w2 (hidden), b2.
struct Predictor {
    int inputs = kPatchFeatureChannels;
    int hidden = 16;
    std::vector<double> weights;

    /// Hidden layer ~ N(0, 1/C), biases and output layer zero, so the raw
    /// output starts at exactly 0.
    static Predictor create(int inputs, int hidden, Rng& rng);
    static std::size_t parameter_count(int inputs, int hidden) {
        return static_cast<std::size_t>(hidden) * inputs + 2 * static_cast<std::size_t>(hidden) + 1;
    }

    friend bool operator==(const Predictor&, const Predictor&) = default;
};

struct PredictorForward {
    Image sigma;                 // grid_width x grid_height x 1
    std::vector<double> raw;     // f(F) per cell
    std::vector<double> hidden;  // tanh activations, cells x hidden
};

/// sigma = softplus(f(F) + delta0) at every cell.
PredictorForward predict_sigma(const Predictor& predictor, const FeatureGrid& features, double delta0);

/// Gradient of a loss with respect to the predictor weights given dL/dsigma.
std::vector<double> predictor_backward(const Predictor& predictor, const FeatureGrid& features,
                                       const PredictorForward& forward, const Image& grad_sigma, double delta0);

/// Area-mean downsampling to the feature grid (same padding rule as the
/// extractor).
Image downsample_area(const Image& image, int grid_scale);

/// E = min(1, d_cos(F_render, F_gt) / s_sem) * |D(render) - D(gt)|_1 per cell.
/// Cosine distance between two all-zero feature vectors is 0; between a zero
/// and a nonzero vector it is 1.
Image residual_target(const Image& render, const Image& gt, const FeatureGrid& features_render,
                      const FeatureGrid& features_gt, double s_sem);

struct PredictorLoss {
    double loss = 0.0;
    Image grad_sigma;
};

/// mean over cells of  E / (2 sigma^2 + eps) + lambda_inc log(sigma + eps).
PredictorLoss predictor_loss(const Image& sigma, const Image& residual, double lambda_inc, double eps);

/// Bilinear upsampling from a grid with cell size `grid_scale` to width x
/// height, half-pixel centers (align_corners = false), edges clamped.
Image upsample_bilinear(const Image& grid, int grid_scale, int width, int height);

/// Upsamples sigma to the image and returns S = exp(-sigma^2 / c_sigma).
Image consistency_score(const Image& sigma_grid, int grid_scale, int width, int height, double c_sigma);

/// M = M_bin S^eta_s + (1 - M_bin) S^eta_t.
Image combine_mask(const Image& score, const Image& prior_mask, double eta_s, double eta_t);

}  // namespace dualsplat
