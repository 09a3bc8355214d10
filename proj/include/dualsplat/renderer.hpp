// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dualsplat/config.hpp"
#include "dualsplat/types.hpp"

#include <cstdint>
#include <vector>

namespace dualsplat {

/// World -> pixel mapping of one view:  p = diag(W, H) (A x + t).
struct Camera2D {
    Mat2 affine = Mat2::identity();
    Vec2 translation;
    int width = 0;
    int height = 0;

    Mat2 pixel_affine() const { return Mat2::diag(width, height) * affine; }
    Vec2 to_pixels(Vec2 x) const;
};

Camera2D camera_of(const View& view);

struct RenderSettings {
    double cutoff_sigma = 3.0;    // Mahalanobis radius of the footprint
    double weight_clamp = 0.999;  // w is clamped to this before compositing
    double min_weight = 1.0 / 255.0;
    double max_condition = 1e12;  // projected covariances beyond this are skipped
    bool deterministic = true;    // fixed-order gradient reduction
    int tile_size = 16;
    int block_rows = 16;  // rows per partial-gradient block in deterministic mode
};

RenderSettings render_settings(const TrainConfig& cfg);

struct Projection {
    Vec2 mean;          // pixels
    Mat2 cov;           // projected covariance, pixels^2
    Mat2 conic;         // inverse of cov
    double radius = 0;  // cutoff_sigma * sqrt(largest eigenvalue)
    Vec2 extent;        // half extents of the footprint's bounding box
    bool valid = false;
};

/// Projects every Gaussian into the camera. Invalid entries are degenerate
/// (non-positive or ill-conditioned covariance).
std::vector<Projection> project(const GaussianCloud& cloud, const Camera2D& cam, const RenderSettings& settings = {});

/// One Gaussian's share of one pixel, in compositing order.
struct Contribution {
    std::uint32_t gaussian;
    bool clamped;          // weight hit the clamp, so it carries no parameter gradient
    double weight;         // w after clamping
    double transmittance;  // product of (1 - w) over earlier contributions
};

struct RenderOutput {
    int width = 0;
    int height = 0;
    Image image;                              // H x W x 3
    std::vector<double> projected_radius;     // N, pixels; 0 for degenerate Gaussians
    std::vector<std::uint32_t> visible_set;   // ascending indices with nonzero contribution
    std::vector<Projection> projections;      // N
    std::vector<Contribution> contributions;  // per pixel, row-major, in compositing order
    std::vector<std::uint32_t> pixel_offsets; // W*H + 1 offsets into contributions
    std::size_t degenerate_count = 0;

    bool is_visible(std::size_t n) const;
};

/// Front-to-back alpha compositing over a black background.
RenderOutput rasterize_forward(const GaussianCloud& cloud, const Camera2D& cam, const RenderSettings& settings = {});

/// Analytic gradient of a scalar loss with respect to the stored parameters,
/// given dL/dimage (H x W x 3) and the forward pass of the same cloud/camera.
GradientBundle rasterize_backward(const GaussianCloud& cloud, const Camera2D& cam, const RenderOutput& forward,
                                  const Image& grad_image, const RenderSettings& settings = {});

/// Serial, untiled implementations kept as the test reference for the
/// OpenMP kernels above.
namespace reference {
RenderOutput rasterize_forward(const GaussianCloud& cloud, const Camera2D& cam, const RenderSettings& settings = {});
GradientBundle rasterize_backward(const GaussianCloud& cloud, const Camera2D& cam, const RenderOutput& forward,
                                  const Image& grad_image, const RenderSettings& settings = {});
}  // namespace reference

namespace detail {

/// Per-Gaussian gradient w.r.t. the projected quantities, accumulated by the
/// pixel loop: mean (2), conic entries xx/xy/yy (3), opacity logit, color (3).
inline constexpr int kScreenGradWidth = 9;

/// Chains screen-space gradients (N x kScreenGradWidth) to stored parameters.
GradientBundle chain_to_parameters(const GaussianCloud& cloud, const Camera2D& cam,
                                   const std::vector<Projection>& projections, const std::vector<double>& screen);

/// Gradient contribution of one pixel's contribution list to `screen`.
void backprop_pixel(const GaussianCloud& cloud, const std::vector<Projection>& projections,
                    const Contribution* begin, const Contribution* end, double px, double py, const double* grad_rgb,
                    double* screen);

}  // namespace detail

}  // namespace dualsplat
