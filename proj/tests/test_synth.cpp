// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/synth.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>

using namespace dualsplat;

namespace {

SynthOptions opts(std::uint64_t seed, int res = 32) {
    SynthOptions o;
    o.seed = seed;
    o.spec.resolution = res;
    o.num_views = 6;
    o.num_heldout = 2;
    return o;
}

double stable_fraction(const Image& m) {
    double s = 0;
    for (double v : m.data) s += v;
    return s / static_cast<double>(m.data.size());
}

std::filesystem::path scratch(const char* name) {
    const auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(Synth, SameSeedSameDataset) {
    const Dataset a = synthesize(opts(11));
    const Dataset b = synthesize(opts(11));
    ASSERT_EQ(a.views.size(), 6u);
    ASSERT_EQ(a.heldout.size(), 2u);
    for (std::size_t i = 0; i < a.views.size(); ++i) {
        EXPECT_EQ(a.views[i].observed, b.views[i].observed);
        EXPECT_EQ(a.views[i].prior_mask, b.views[i].prior_mask);
        EXPECT_EQ(a.views[i].gain, b.views[i].gain);
    }
    EXPECT_EQ(a.heldout[1].clean, b.heldout[1].clean);
}

TEST(Synth, DifferentSeedsDiffer) {
    const Dataset a = synthesize(opts(11));
    const Dataset b = synthesize(opts(12));
    EXPECT_NE(a.views[0].observed, b.views[0].observed);
    EXPECT_NE(generate_scene(11).cloud, generate_scene(12).cloud);
}

TEST(Synth, SceneLayout) {
    SceneSpec spec;
    const Scene s = generate_scene(4, spec);
    EXPECT_EQ(s.cloud.size(), static_cast<std::size_t>(36 + spec.blobs + 1 + spec.stripes));
    for (double c : s.cloud.colors) EXPECT_LE(c, 0.7);
    const Image img = s.render(Mat2::identity(), {0.0, 0.0});
    ASSERT_EQ(img.width, 64);
    for (double v : img.data) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 0.7);
    }
    // Removing the round center blob changes the center pixel.
    Scene without = s;
    GaussianCloud kept;
    for (std::size_t n = 0; n < s.cloud.size(); ++n) {
        if (n == static_cast<std::size_t>(36 + spec.blobs)) continue;
        kept.append_from(s.cloud, n);
    }
    without.cloud = kept;
    ASSERT_EQ(s.cloud.positions[2 * (36 + spec.blobs)], 0.5);
    EXPECT_GT(std::abs(img.at(32, 32, 2) - without.render(Mat2::identity(), {0.0, 0.0}).at(32, 32, 2)), 0.01);
}

TEST(Synth, CleanConditionsReproduceTheCleanRender) {
    SynthOptions o = opts(5);
    o.occlusion = OcclusionLevel::None;
    o.illumination = IlluminationLevel::None;
    const Dataset d = synthesize(o);
    for (const SynthView& v : d.views) {
        EXPECT_EQ(v.observed, v.clean);
        EXPECT_EQ(v.transient_count, 0);
        for (double m : v.true_mask.data) EXPECT_EQ(m, 1.0);
        for (double m : v.prior_mask.data) EXPECT_EQ(m, 1.0);
        EXPECT_EQ(v.gain, (std::array<double, 3>{1, 1, 1}));
    }
}

TEST(Synth, CleanImageMatchesSceneRender) {
    const Dataset d = synthesize(opts(6));
    const Scene s = dataset_scene(d);
    for (const SynthView& v : d.views) EXPECT_EQ(v.clean, s.render(v.affine, v.translation));
    for (const HeldoutView& h : d.heldout) EXPECT_EQ(h.clean, s.render(h.affine, h.translation));
}

TEST(Synth, HighOcclusionMaskedFraction) {
    double total = 0;
    int n = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Dataset d = synthesize(opts(seed));
        for (const SynthView& v : d.views) {
            EXPECT_GE(v.transient_count, 3);
            EXPECT_LE(v.transient_count, 6);
            total += 1.0 - stable_fraction(v.true_mask);
            ++n;
        }
    }
    const double mean = total / n;
    EXPECT_GE(mean, 0.05);
    EXPECT_LE(mean, 0.25);
}

TEST(Synth, IlluminationIsExactOnTransientFreePixels) {
    const Dataset d = synthesize(opts(7));
    for (const SynthView& v : d.views) {
        for (int ch = 0; ch < 3; ++ch) {
            EXPECT_GE(v.gain[ch], 0.7);
            EXPECT_LE(v.gain[ch], 1.3);
            EXPECT_GE(v.bias[ch], 0.0);
            EXPECT_LE(v.bias[ch], 0.03);
        }
        for (int y = 0; y < v.clean.height; ++y)
            for (int x = 0; x < v.clean.width; ++x) {
                if (v.true_mask.at(x, y) != 1.0) continue;
                for (int ch = 0; ch < 3; ++ch)
                    ASSERT_EQ(v.observed.at(x, y, ch), v.gain[ch] * v.clean.at(x, y, ch) + v.bias[ch]);
            }
    }
}

TEST(Synth, TransientPixelsDifferFromTheIlluminatedClean) {
    SynthOptions o = opts(8);
    o.illumination = IlluminationLevel::None;
    const Dataset d = synthesize(o);
    int changed = 0, masked = 0;
    for (const SynthView& v : d.views)
        for (int y = 0; y < v.clean.height; ++y)
            for (int x = 0; x < v.clean.width; ++x) {
                if (v.true_mask.at(x, y) != 0.0) continue;
                ++masked;
                changed += v.observed.at(x, y, 0) != v.clean.at(x, y, 0);
            }
    ASSERT_GT(masked, 0);
    EXPECT_GT(changed, masked * 9 / 10);
}

TEST(Synth, PriorDisagreesWithTruthModestly) {
    double total = 0;
    int n = 0;
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const Dataset d = synthesize(opts(seed));
        for (const SynthView& v : d.views) {
            int diff = 0;
            for (std::size_t i = 0; i < v.true_mask.data.size(); ++i) diff += v.true_mask.data[i] != v.prior_mask.data[i];
            total += static_cast<double>(diff) / v.true_mask.data.size();
            ++n;
        }
    }
    EXPECT_GT(total / n, 0.0);
    EXPECT_LE(total / n, 0.15);
}

TEST(Synth, TrainingAndHeldoutViews) {
    const Dataset d = synthesize(opts(9));
    const std::vector<View> tr = training_views(d);
    ASSERT_EQ(tr.size(), 6u);
    EXPECT_EQ(tr[3].gt_image, d.views[3].observed);
    EXPECT_EQ(tr[3].prior_mask, d.views[3].prior_mask);
    EXPECT_EQ(tr[3].view_id, 3);
    const std::vector<View> ho = heldout_views(d);
    ASSERT_EQ(ho.size(), 2u);
    for (double m : ho[0].prior_mask.data) EXPECT_EQ(m, 1.0);
}

TEST(Synth, LevelNames) {
    for (auto l : {OcclusionLevel::None, OcclusionLevel::Low, OcclusionLevel::Medium, OcclusionLevel::High})
        EXPECT_EQ(occlusion_from_name(occlusion_name(l)), l);
    for (auto l : {IlluminationLevel::None, IlluminationLevel::Mild, IlluminationLevel::Strong})
        EXPECT_EQ(illumination_from_name(illumination_name(l)), l);
    EXPECT_THROW(occlusion_from_name("extreme"), ContractError);
    EXPECT_THROW(generate_views(generate_scene(1), 1, OcclusionLevel::None, IlluminationLevel::None, 1), ContractError);
}

TEST(SynthIo, FloatSidecarsRoundTripBitExact) {
    const Dataset d = synthesize(opts(10));
    const auto dir = scratch("dualsplat_ds_f");
    write_dataset(d, dir, true);
    const Dataset r = read_dataset(dir);
    EXPECT_EQ(r.seed, d.seed);
    EXPECT_EQ(r.view_seed, d.view_seed);
    EXPECT_EQ(r.spec, d.spec);
    EXPECT_EQ(r.occlusion, d.occlusion);
    ASSERT_EQ(r.views.size(), d.views.size());
    for (std::size_t i = 0; i < d.views.size(); ++i) {
        EXPECT_EQ(r.views[i].observed, d.views[i].observed);
        EXPECT_EQ(r.views[i].clean, d.views[i].clean);
        EXPECT_EQ(r.views[i].true_mask, d.views[i].true_mask);
        EXPECT_EQ(r.views[i].prior_mask, d.views[i].prior_mask);
        EXPECT_EQ(r.views[i].gain, d.views[i].gain);
        EXPECT_EQ(r.views[i].affine, d.views[i].affine);
        EXPECT_EQ(r.views[i].transient_count, d.views[i].transient_count);
    }
    EXPECT_EQ(r.heldout[1].clean, d.heldout[1].clean);
    std::filesystem::remove_all(dir);
}

TEST(SynthIo, PngRoundTripWithinQuantization) {
    const Dataset d = synthesize(opts(10));
    const auto dir = scratch("dualsplat_ds_p");
    write_dataset(d, dir);
    EXPECT_TRUE(std::filesystem::exists(dir / "views" / "view_000.png"));
    EXPECT_TRUE(std::filesystem::exists(dir / "masks_prior" / "view_005.png"));
    EXPECT_FALSE(std::filesystem::exists(dir / "float"));
    const Dataset r = read_dataset(dir);
    for (std::size_t i = 0; i < d.views.size(); ++i) {
        for (std::size_t k = 0; k < d.views[i].observed.data.size(); ++k)
            ASSERT_NEAR(r.views[i].observed.data[k], d.views[i].observed.data[k], 0.5 / 255 + 1e-12);
        EXPECT_EQ(r.views[i].prior_mask, d.views[i].prior_mask);
    }
    std::filesystem::remove_all(dir);
}

TEST(SynthIo, MissingFileIsNamed) {
    const auto dir = scratch("dualsplat_ds_m");
    write_dataset(synthesize(opts(10)), dir);
    std::filesystem::remove(dir / "masks_prior" / "view_002.png");
    try {
        read_dataset(dir);
        FAIL() << "expected DatasetError";
    } catch (const DatasetError& e) {
        EXPECT_NE(std::string(e.what()).find("masks_prior/view_002.png"), std::string::npos) << e.what();
    }
    EXPECT_THROW(read_dataset(dir / "nope"), DatasetError);
    std::filesystem::remove_all(dir);
}

TEST(SynthIo, SchemaMismatchIsRejected) {
    const auto dir = scratch("dualsplat_ds_s");
    write_dataset(synthesize(opts(10)), dir);
    nlohmann::json meta;
    {
        std::ifstream in(dir / "meta.json");
        in >> meta;
    }
    meta["schema_version"] = kDatasetSchemaVersion + 1;
    {
        std::ofstream out(dir / "meta.json");
        out << meta;
    }
    try {
        read_dataset(dir);
        FAIL() << "expected DatasetError";
    } catch (const DatasetError& e) {
        EXPECT_NE(std::string(e.what()).find("schema"), std::string::npos);
    }
    std::filesystem::remove_all(dir);
}
