// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dualsplat/renderer.hpp"
#include "dualsplat/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace dualsplat {

inline constexpr int kDatasetSchemaVersion = 1;

class DatasetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class OcclusionLevel { None, Low, Medium, High };
enum class IlluminationLevel { None, Mild, Strong };

std::string_view occlusion_name(OcclusionLevel l);
std::string_view illumination_name(IlluminationLevel l);
OcclusionLevel occlusion_from_name(std::string_view s);
IlluminationLevel illumination_from_name(std::string_view s);

/// Transient count range [lo, hi] and target coverage fraction range.
struct OcclusionProfile {
    int min_count = 0;
    int max_count = 0;
    double min_coverage = 0.0;
    double max_coverage = 0.0;
};
OcclusionProfile occlusion_profile(OcclusionLevel l);

/// Gain half-width delta: gain in [1 - delta, 1 + delta], bias in [0, delta / 10].
double illumination_delta(IlluminationLevel l);

struct SceneSpec {
    int resolution = 64;
    int blobs = 10;
    int stripes = 6;

    friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// The static scene is itself a set of Gaussians composited by the renderer:
///   - a 6 x 6 back layer of broad, nearly opaque Gaussians over [-0.3, 1.3]^2
///     (covers the view margins), colors in [0.15, 0.45];
///   - `blobs` anisotropic blobs in [0.1, 0.9]^2 plus one round blob at
///     (0.5, 0.5) in front of them;
///   - `stripes` thin elongated Gaussians (aspect 12:1) in front.
/// Every color is at most 0.7, so the clean image never exceeds 0.7 and
/// illumination never clips transient-free pixels.
struct Scene {
    std::uint64_t seed = 0;
    SceneSpec spec;
    GaussianCloud cloud;

    Image render(const Camera2D& cam) const;
    Image render(const Mat2& affine, Vec2 translation) const;  // at spec.resolution
};

Scene generate_scene(std::uint64_t seed, const SceneSpec& spec = {});

struct SynthView {
    Mat2 affine = Mat2::identity();
    Vec2 translation;
    std::array<double, 3> gain{1.0, 1.0, 1.0};
    std::array<double, 3> bias{0.0, 0.0, 0.0};
    int transient_count = 0;
    Image observed;    // H x W x 3
    Image clean;       // H x W x 3, same affine, canonical illumination
    Image true_mask;   // H x W x 1, 1 = stable
    Image prior_mask;  // H x W x 1, corrupted copy of true_mask
};

struct HeldoutView {
    Mat2 affine = Mat2::identity();
    Vec2 translation;
    Image clean;
};

struct Dataset {
    int schema_version = kDatasetSchemaVersion;
    std::uint64_t seed = 0;       // scene seed
    std::uint64_t view_seed = 0;  // seed passed to generate_views
    SceneSpec spec;
    OcclusionLevel occlusion = OcclusionLevel::None;
    IlluminationLevel illumination = IlluminationLevel::None;
    std::vector<SynthView> views;
    std::vector<HeldoutView> heldout;
};

/// Views of `scene` under random affines (rotation <= 15 degrees about the
/// image center, scale in [0.9, 1.1], translation <= 0.1 per axis), with hard
/// edged transient ellipses and per-channel gain/bias. Prior masks are the true
/// masks after a seeded dilation or erosion (radius <= 2 px) and, with
/// probability 0.1, one region flip (a missed transient or a false blob).
/// Held-out views are clean renders at further unseen affines.
Dataset generate_views(const Scene& scene, int num_views, OcclusionLevel occlusion, IlluminationLevel illumination,
                       std::uint64_t seed, int num_heldout = 4);

struct SynthOptions {
    std::uint64_t seed = 0;
    SceneSpec spec;
    int num_views = 20;
    int num_heldout = 4;
    OcclusionLevel occlusion = OcclusionLevel::High;
    IlluminationLevel illumination = IlluminationLevel::Strong;
};

/// Scene and views from one seed.
Dataset synthesize(const SynthOptions& options);

/// Training views (observed image + prior mask) and held-out views (clean
/// image, all-stable mask).
std::vector<View> training_views(const Dataset& d);
std::vector<View> heldout_views(const Dataset& d);

/// The generating scene, rebuilt from the dataset's seed and spec.
Scene dataset_scene(const Dataset& d);

/// Layout:
///   meta.json                       manifest (schema version, seed, levels,
///                                   per-view affine, gain, bias, transients)
///   views/view_NNN.png              observed images
///   clean/view_NNN.png              clean references
///   masks_true/view_NNN.png         exact transient masks (255 = stable)
///   masks_prior/view_NNN.png        corrupted prior masks
///   heldout/heldout_NNN.png         held-out clean views
///   float/<dir>_NNN.f64             optional double-precision sidecars
void write_dataset(const Dataset& d, const std::filesystem::path& dir, bool float_sidecars = false);

/// Reads a dataset; images come from the float sidecars when present, PNGs
/// otherwise. Throws DatasetError naming the first missing file or a schema
/// version mismatch.
Dataset read_dataset(const std::filesystem::path& dir);

}  // namespace dualsplat
