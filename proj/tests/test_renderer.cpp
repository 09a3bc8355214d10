// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/renderer.hpp"
#include "dualsplat/synth.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace dualsplat;

namespace {

Camera2D square(int side) { return {Mat2::identity(), {}, side, side}; }

GaussianCloud single(Vec2 pos, double scale, double alpha, std::array<double, 3> rgb) {
    GaussianCloud c;
    c.resize(1);
    c.positions = {pos.x, pos.y};
    c.log_scales = {std::log(scale), std::log(scale)};
    c.opacity_logits = {logit(alpha)};
    c.colors = {rgb[0], rgb[1], rgb[2]};
    return c;
}

// Wide cutoff and no weight floor make the image smooth in every parameter,
// which finite differences need.
RenderSettings smooth_settings() {
    RenderSettings s;
    s.cutoff_sigma = 30.0;
    s.min_weight = 0.0;
    return s;
}

double dot(const Image& a, const Image& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += a.data[i] * b.data[i];
    return s;
}

struct FdResult {
    double max_rel = 0;
    int checked = 0;
};

FdResult check_gradients(GaussianCloud cloud, const Camera2D& cam, std::uint64_t seed, bool use_reference) {
    const RenderSettings s = smooth_settings();
    const Image g = oracle::random_image(cam.width, cam.height, 3, seed, -1.0, 1.0);
    auto loss = [&] { return dot(rasterize_forward(cloud, cam, s).image, g); };
    const RenderOutput fwd = rasterize_forward(cloud, cam, s);
    const GradientBundle b = use_reference ? reference::rasterize_backward(cloud, cam, fwd, g, s)
                                           : rasterize_backward(cloud, cam, fwd, g, s);
    FdResult r;
    for (Attribute a : kAllAttributes) {
        auto& p = cloud.param(a);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double fd = oracle::central_diff(loss, &p[i], 1e-5);
            const double e = oracle::rel_err(b[a][i], fd, 1e-8);
            r.max_rel = std::max(r.max_rel, e);
            ++r.checked;
        }
    }
    return r;
}

}  // namespace

TEST(Project, IdentityMapsCenterToPixels) {
    const GaussianCloud c = single({0.5, 0.5}, 0.1, 0.5, {1, 1, 1});
    const auto pr = project(c, square(64));
    EXPECT_EQ(pr[0].mean, (Vec2{32.0, 32.0}));
    EXPECT_TRUE(pr[0].valid);
    EXPECT_NEAR(pr[0].radius, 3 * 6.4, 1e-12);
}

TEST(Project, DoublingTheAffineDoublesTheRadius) {
    const GaussianCloud c = single({0.3, 0.6}, 0.1, 0.5, {1, 1, 1});
    const double r1 = project(c, square(64))[0].radius;
    const double r2 = project(c, {Mat2::diag(2, 2), {}, 64, 64})[0].radius;
    EXPECT_NEAR(r2, 2 * r1, 1e-12);
}

TEST(Project, RotationPreservesEigenvalues) {
    GaussianCloud c = single({0.5, 0.5}, 0.1, 0.5, {1, 1, 1});
    c.log_scales = {std::log(0.2), std::log(0.05)};
    c.rotations = {0.4};
    const Camera2D cam{Mat2::rotation(1.1), {0.1, -0.2}, 1, 1};
    const auto eig = symmetric_eigenvalues(project(c, cam)[0].cov);
    EXPECT_NEAR(eig[0], 0.04, 1e-15);
    EXPECT_NEAR(eig[1], 0.0025, 1e-15);
}

TEST(Project, SingularAffineIsAContractError) {
    const GaussianCloud c = single({0.5, 0.5}, 0.1, 0.5, {1, 1, 1});
    EXPECT_THROW(project(c, {Mat2{1, 2, 2, 4}, {}, 8, 8}), ContractError);
}

TEST(Forward, SingleGaussianAtPixelCenter) {
    // Pixel (10, 20) has center (10.5, 20.5).
    const GaussianCloud c = single({10.5 / 32, 20.5 / 32}, 0.05, 0.5, {0.2, 0.4, 0.8});
    const Image img = rasterize_forward(c, square(32)).image;
    EXPECT_NEAR(img.at(10, 20, 0), 0.1, 1e-15);
    EXPECT_NEAR(img.at(10, 20, 1), 0.2, 1e-15);
    EXPECT_NEAR(img.at(10, 20, 2), 0.4, 1e-15);
}

TEST(Forward, TwoGaussiansCompositeFrontToBack) {
    GaussianCloud c = single({8.5 / 16, 8.5 / 16}, 0.05, 0.5, {1, 0, 0});
    c.append_from(single({8.5 / 16, 8.5 / 16}, 0.05, 0.8, {0, 1, 0}), 0);
    c.depths = {0.1, 0.2};
    const Image img = rasterize_forward(c, square(16)).image;
    EXPECT_NEAR(img.at(8, 8, 0), 0.5, 1e-15);
    EXPECT_NEAR(img.at(8, 8, 1), 0.4, 1e-15);
    EXPECT_EQ(img.at(8, 8, 2), 0.0);
    // Swapping depths swaps the order.
    c.depths = {0.3, 0.2};
    const Image swapped = rasterize_forward(c, square(16)).image;
    EXPECT_NEAR(swapped.at(8, 8, 0), 0.1, 1e-15);
    EXPECT_NEAR(swapped.at(8, 8, 1), 0.8, 1e-15);
}

TEST(Forward, WeightIsClamped) {
    const GaussianCloud c = single({4.5 / 8, 4.5 / 8}, 0.1, 1.0 - 1e-9, {1, 1, 1});
    const RenderOutput out = rasterize_forward(c, square(8));
    EXPECT_NEAR(out.image.at(4, 4, 0), 0.999, 1e-15);
}

TEST(Forward, MatchesBruteForceOracle) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const GaussianCloud c = oracle::random_cloud(8, seed);
        const Camera2D cam{Mat2{1.05, 0.1, -0.08, 0.95}, {0.02, -0.03}, 32, 32};
        const RenderOutput out = rasterize_forward(c, cam);

        // Same inclusion rule: agreement everywhere.
        const auto same = oracle::brute_render(c, cam, 3.0);
        EXPECT_LE(oracle::max_abs_diff(out.image, same.image), 1e-12);

        // No radius cutoff: agreement wherever the included sets coincide.
        const auto nocut = oracle::brute_render(c, cam, oracle::kNoCutoff);
        int compared = 0;
        for (int y = 0; y < cam.height; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                const std::size_t p = static_cast<std::size_t>(y) * cam.width + x;
                std::vector<std::size_t> ours;
                for (auto i = out.pixel_offsets[p]; i < out.pixel_offsets[p + 1]; ++i)
                    ours.push_back(out.contributions[i].gaussian);
                if (ours != nocut.included[p]) continue;
                ++compared;
                for (int k = 0; k < 3; ++k) ASSERT_LE(std::abs(out.image.at(x, y, k) - nocut.image.at(x, y, k)), 1e-6);
            }
        }
        EXPECT_GT(compared, 0);
    }
}

TEST(Forward, TiledMatchesReference) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const GaussianCloud c = oracle::random_cloud(40, seed, 0.01, 0.2);
        const Camera2D cam{Mat2::rotation(0.3 * seed), {0.1, -0.1}, 45, 37};
        const RenderOutput a = rasterize_forward(c, cam);
        const RenderOutput b = reference::rasterize_forward(c, cam);
        EXPECT_EQ(a.image, b.image);
        EXPECT_EQ(a.visible_set, b.visible_set);
        EXPECT_EQ(a.pixel_offsets, b.pixel_offsets);
        EXPECT_EQ(a.projected_radius, b.projected_radius);
    }
}

TEST(Forward, OutputInvariants) {
    const GaussianCloud c = oracle::random_cloud(30, 4, 0.01, 0.1);
    const RenderOutput out = rasterize_forward(c, square(40));
    for (double v : out.image.data) EXPECT_GE(v, 0.0);
    for (auto n : out.visible_set) {
        EXPECT_LT(n, c.size());
        EXPECT_GT(out.projected_radius[n], 0.0);
    }
    EXPECT_TRUE(std::is_sorted(out.visible_set.begin(), out.visible_set.end()));
}

TEST(Forward, DegenerateCovarianceIsSkippedAndCounted) {
    GaussianCloud c = oracle::random_cloud(3, 5);
    c.log_scales[2] = 0.0;
    c.log_scales[3] = -20.0;  // condition number e^40
    const RenderOutput out = rasterize_forward(c, square(32));
    EXPECT_EQ(out.degenerate_count, 1u);
    EXPECT_FALSE(out.is_visible(1));
    EXPECT_EQ(out.projected_radius[1], 0.0);
}

TEST(Forward, BitIdenticalAcrossRuns) {
    const GaussianCloud c = oracle::random_cloud(50, 6, 0.01, 0.15);
    const Camera2D cam = square(48);
    EXPECT_EQ(rasterize_forward(c, cam).image, rasterize_forward(c, cam).image);
}

// Pointwise, a 3 sigma cutoff can drop a weight of up to alpha e^{-9/2}
// (about 0.011), so the 1e-3 tolerance is applied to the mean change and
// the maximum to 1.5 times that single-boundary weight (two boundary
// contributions can stack at one pixel).
TEST(Forward, CullingSoundOnSyntheticScenes) {
    RenderSettings wide;
    wide.cutoff_sigma = 5.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Scene scene = generate_scene(seed);
        const Camera2D cam = square(scene.spec.resolution);
        const Image a = rasterize_forward(scene.cloud, cam).image;
        const Image b = rasterize_forward(scene.cloud, cam, wide).image;
        double mean = 0;
        for (std::size_t i = 0; i < a.data.size(); ++i) mean += std::abs(a.data[i] - b.data[i]);
        mean /= static_cast<double>(a.data.size());
        EXPECT_LE(mean, 1e-3) << "seed " << seed;
        EXPECT_LE(oracle::max_abs_diff(a, b), 1.5 * std::exp(-4.5)) << "seed " << seed;
    }
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
    const GaussianCloud c = oracle::random_cloud(8, 7);
    const Camera2D cam = square(32);
    const RenderOutput fwd = rasterize_forward(c, cam);
    const GradientBundle b = rasterize_backward(c, cam, fwd, Image(32, 32, 3));
    for (Attribute a : kAllAttributes)
        for (double v : b[a]) EXPECT_EQ(v, 0.0);
    for (double v : b.view_space_pos) EXPECT_EQ(v, 0.0);
}

TEST(Backward, ShapeMismatchIsAContractError) {
    const GaussianCloud c = oracle::random_cloud(2, 7);
    const RenderOutput fwd = rasterize_forward(c, square(16));
    EXPECT_THROW(rasterize_backward(c, square(16), fwd, Image(16, 15, 3)), ContractError);
    EXPECT_THROW(rasterize_backward(c, square(16), fwd, Image(16, 16, 1)), ContractError);
    EXPECT_THROW(reference::rasterize_backward(c, square(16), fwd, Image(15, 16, 3)), ContractError);
}

TEST(Backward, SingleGaussianMatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        GaussianCloud c = oracle::random_cloud(1, 100 + seed);
        const auto r = check_gradients(c, {Mat2{0.9, 0.2, -0.1, 1.1}, {0.03, 0.01}, 32, 32}, seed, false);
        EXPECT_EQ(r.checked, 9);
        EXPECT_LE(r.max_rel, 1e-4);
    }
}

TEST(Backward, EightGaussiansMatchFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const GaussianCloud c = oracle::random_cloud(8, 200 + seed);
        const Camera2D cam{Mat2::rotation(0.4) * Mat2::diag(1.1, 0.9), {0.05, -0.1}, 32, 32};
        EXPECT_LE(check_gradients(c, cam, seed, false).max_rel, 1e-4);
        EXPECT_LE(check_gradients(c, cam, seed, true).max_rel, 1e-4);
    }
}

TEST(Backward, ViewSpaceChainRule) {
    const GaussianCloud c = oracle::random_cloud(8, 9);
    const Camera2D cam{Mat2{0.8, 0.3, -0.2, 1.2}, {0.1, 0.0}, 32, 24};
    const RenderOutput fwd = rasterize_forward(c, cam);
    const GradientBundle b = rasterize_backward(c, cam, fwd, oracle::random_image(32, 24, 3, 1, -1, 1));
    const Mat2 P = cam.pixel_affine();
    for (std::size_t n = 0; n < c.size(); ++n) {
        const Vec2 v = b.view_space(n);
        const double gx = P.a * v.x + P.c * v.y;
        const double gy = P.b * v.x + P.d * v.y;
        EXPECT_LE(oracle::rel_err(gx, b[Attribute::Position][2 * n], 1e-300), 1e-10);
        EXPECT_LE(oracle::rel_err(gy, b[Attribute::Position][2 * n + 1], 1e-300), 1e-10);
    }
}

TEST(Backward, DeterministicModeIsBitExactAndMatchesReference) {
    const GaussianCloud c = oracle::random_cloud(60, 10, 0.01, 0.15);
    const Camera2D cam{Mat2::rotation(0.2), {0.05, 0.05}, 50, 41};
    const RenderOutput fwd = rasterize_forward(c, cam);
    const Image g = oracle::random_image(50, 41, 3, 2, -1, 1);
    const GradientBundle a = rasterize_backward(c, cam, fwd, g);
    const GradientBundle b = rasterize_backward(c, cam, fwd, g);
    const GradientBundle r = reference::rasterize_backward(c, cam, fwd, g);
    for (Attribute at : kAllAttributes) {
        EXPECT_EQ(a[at], b[at]);
        for (std::size_t i = 0; i < a[at].size(); ++i)
            EXPECT_LE(oracle::rel_err(a[at][i], r[at][i], 1e-12), 1e-9) << attribute_name(at) << " " << i;
    }
    EXPECT_EQ(a.view_space_pos, b.view_space_pos);
}

TEST(Backward, FastReductionAgreesWithinRounding) {
    const GaussianCloud c = oracle::random_cloud(60, 11, 0.01, 0.15);
    const Camera2D cam = square(48);
    RenderSettings fast;
    fast.deterministic = false;
    const RenderOutput fwd = rasterize_forward(c, cam);
    const Image g = oracle::random_image(48, 48, 3, 3, -1, 1);
    const GradientBundle a = rasterize_backward(c, cam, fwd, g);
    const GradientBundle b = rasterize_backward(c, cam, fwd, g, fast);
    for (Attribute at : kAllAttributes)
        for (std::size_t i = 0; i < a[at].size(); ++i) EXPECT_LE(oracle::rel_err(a[at][i], b[at][i], 1e-12), 1e-9);
}

TEST(Backward, ClampedContributionHasNoParameterGradient) {
    const GaussianCloud c = single({4.5 / 8, 4.5 / 8}, 0.5, 1.0 - 1e-9, {0.3, 0.3, 0.3});
    const Camera2D cam = square(8);
    const RenderOutput fwd = rasterize_forward(c, cam);
    Image g(8, 8, 3);
    g.at(4, 4, 0) = 1.0;
    const GradientBundle b = rasterize_backward(c, cam, fwd, g);
    EXPECT_EQ(b[Attribute::Opacity][0], 0.0);
    EXPECT_NEAR(b[Attribute::Color][0], 0.999, 1e-15);
}
