// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/config.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

using namespace dualsplat;

TEST(TrainConfig, DefaultsMatchPublishedSettings) {
    const TrainConfig c;
    EXPECT_EQ(c.lambda_rec, 0.25);
    EXPECT_EQ(c.rho, 0.5);
    EXPECT_EQ(c.k_geo, 0.5);
    EXPECT_EQ(c.s_sem, 0.5);
    EXPECT_EQ(c.c_sigma, 0.2);
    EXPECT_EQ(c.eta_s, 1.2);
    EXPECT_EQ(c.eta_t, 3.0);
    EXPECT_EQ(c.lambda_inc, 0.5);
    EXPECT_EQ(c.delta0, std::log(std::numbers::e - 1.0));
    EXPECT_EQ(c.eps_inc, 1e-6);
    EXPECT_EQ(c.gamma, 0.99);
    EXPECT_EQ(c.lambda_prune, 0.3);
    EXPECT_EQ(c.decay_interval, 100);
    EXPECT_EQ(c.prune_opacity, 0.005);
    EXPECT_TRUE(validate_config(c).empty());
}

TEST(TrainConfig, TextRoundTripIsExact) {
    TrainConfig c;
    c.rho = 0.1 + 0.2;  // not representable in short decimal
    c.seed = 123456789012345ULL;
    c.mask_mode = MaskMode::ScoreOnly;
    c.harmonize = false;
    EXPECT_EQ(parse_config_text(config_to_text(c)), c);
}

TEST(TrainConfig, EveryKeyRoundTrips) {
    const TrainConfig c;
    for (const auto& key : config_keys()) {
        TrainConfig d;
        set_config_value(d, key, get_config_value(c, key));
        EXPECT_EQ(d, c) << key;
        EXPECT_FALSE(config_key_help(key).empty()) << key;
    }
}

TEST(TrainConfig, CommentsAndBlankLines) {
    const TrainConfig c = parse_config_text("# header\n\n rho = 0.25  # inline\nsingle_view = true\n");
    EXPECT_EQ(c.rho, 0.25);
    EXPECT_TRUE(c.single_view);
}

TEST(TrainConfig, RejectsUnknownKeysAndBadValues) {
    TrainConfig c;
    EXPECT_THROW(set_config_value(c, "nonsense", "1"), ConfigError);
    EXPECT_THROW(set_config_value(c, "rho", "half"), ConfigError);
    EXPECT_THROW(set_config_value(c, "rho", "0.5x"), ConfigError);
    EXPECT_THROW(set_config_value(c, "harmonize", "maybe"), ConfigError);
    EXPECT_THROW(set_config_value(c, "mask_mode", "partial"), ConfigError);
    EXPECT_THROW(parse_config_text("rho 0.5\n"), ConfigError);
}

TEST(TrainConfig, ValidationInvariants) {
    auto broken = [](auto mutate) {
        TrainConfig c;
        mutate(c);
        return !validate_config(c).empty();
    };
    EXPECT_TRUE(broken([](TrainConfig& c) { c.rho = 1.5; }));
    EXPECT_TRUE(broken([](TrainConfig& c) { c.rho = -0.1; }));
    EXPECT_TRUE(broken([](TrainConfig& c) { c.gamma = 1.0; }));
    EXPECT_TRUE(broken([](TrainConfig& c) { c.gamma = 0.0; }));
    EXPECT_TRUE(broken([](TrainConfig& c) { c.prune_opacity = 0.0; }));
    EXPECT_TRUE(broken([](TrainConfig& c) { c.densify_grad_threshold = 0.0; }));
    EXPECT_TRUE(broken([](TrainConfig& c) { c.warmup_iters = c.total_iters; }));
    EXPECT_FALSE(broken([](TrainConfig& c) { c.rho = 1.0; }));
    EXPECT_FALSE(broken([](TrainConfig& c) { c.rho = 0.0; }));
}

TEST(TrainConfig, FileRoundTrip) {
    const auto path = std::filesystem::temp_directory_path() / "dualsplat_test_config.txt";
    TrainConfig c;
    c.total_iters = 77;
    c.warmup_iters = 7;
    save_config(c, path);
    EXPECT_EQ(load_config(path), c);
    std::filesystem::remove(path);
    EXPECT_THROW(load_config(path), ConfigError);
}

TEST(TrainConfig, AblationTags) {
    TrainConfig c;
    EXPECT_EQ(ablation_tag(c), "full");
    c.mask_mode = MaskMode::None;
    EXPECT_EQ(ablation_tag(c), "no-mask");
    c = {};
    c.harmonize = false;
    c.conflict_structure = false;
    EXPECT_EQ(ablation_tag(c), "no-harmonize+no-conflict-structure");
    c = {};
    c.single_view = true;
    c.mask_mode = MaskMode::None;
    c.harmonize = false;
    EXPECT_EQ(ablation_tag(c), "single-view+no-mask");
}
