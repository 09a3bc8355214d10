// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/checkpoint.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace dualsplat;

namespace {

Checkpoint random_checkpoint(std::uint64_t seed, std::size_t n) {
    Rng rng(seed);
    Checkpoint c;
    c.iteration = static_cast<std::int64_t>(rng.below(100000));
    c.cloud = oracle::random_cloud(n, seed);
    for (std::size_t i = 0; i < n; ++i) {
        c.cloud.densify_r_max[i] = rng.uniform(0, 9);
        c.cloud.densify_grad_accum[i] = rng.uniform();
        c.cloud.densify_count[i] = static_cast<std::int64_t>(rng.below(50));
        c.cloud.conflict_ema[i] = rng.uniform();
    }
    c.predictor_weights.resize(rng.below(40));
    for (double& w : c.predictor_weights) w = rng.normal();
    c.optimizer_state.init(n, c.predictor_weights.size());
    for (auto& g : c.optimizer_state.groups)
        for (std::size_t i = 0; i < g.m.size(); ++i) {
            g.m[i] = rng.normal();
            g.v[i] = rng.uniform();
        }
    c.optimizer_state.step = static_cast<std::int64_t>(rng.below(5000));
    c.rng_seed = rng.next_u64();
    c.rng_counter = rng.next_u64();
    return c;
}

std::filesystem::path temp_file(const char* name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST(Checkpoint, ThreeGaussianRoundTripIsBitExact) {
    Checkpoint c = random_checkpoint(1, 3);
    c.cloud.positions[0] = 0.1 + 0.2;
    c.cloud.colors[4] = std::numeric_limits<double>::denorm_min();
    c.cloud.rotations[1] = -0.0;
    const auto path = temp_file("dualsplat_ckpt3.ckpt");
    save_checkpoint(path, c);
    const Checkpoint d = load_checkpoint(path);
    EXPECT_EQ(d, c);
    EXPECT_TRUE(std::signbit(d.cloud.rotations[1]));
    std::filesystem::remove(path);
}

TEST(Checkpoint, RandomStatesRoundTrip) {
    for (std::uint64_t s = 0; s < 50; ++s) {
        const Checkpoint c = random_checkpoint(s, s % 17);
        const auto bytes = serialize_checkpoint(c);
        EXPECT_EQ(deserialize_checkpoint(bytes), c);
        EXPECT_EQ(serialize_checkpoint(deserialize_checkpoint(bytes)), bytes);
    }
}

TEST(Checkpoint, HeaderLayout) {
    const auto bytes = serialize_checkpoint(random_checkpoint(2, 2));
    ASSERT_GE(bytes.size(), 28u);
    EXPECT_EQ(std::memcmp(bytes.data(), "DSCKPT\0\0", 8), 0);
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + 8, 4);
    EXPECT_EQ(version, kCheckpointVersion);
    std::uint64_t len = 0;
    std::memcpy(&len, bytes.data() + 12, 8);
    EXPECT_EQ(len + 28, bytes.size());
}

TEST(Checkpoint, VersionMismatchIsRejected) {
    auto bytes = serialize_checkpoint(random_checkpoint(3, 3));
    const std::uint32_t next = kCheckpointVersion + 1;
    std::memcpy(bytes.data() + 8, &next, 4);
    try {
        deserialize_checkpoint(bytes);
        FAIL() << "expected a version error";
    } catch (const CheckpointError& e) {
        EXPECT_EQ(e.kind(), CheckpointError::Kind::Version);
    }
}

TEST(Checkpoint, TruncationAndBitFlipsAreCorruption) {
    const auto bytes = serialize_checkpoint(random_checkpoint(4, 3));
    for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
        const std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut));
        try {
            deserialize_checkpoint(t);
            FAIL() << "accepted truncated checkpoint of " << cut << " bytes";
        } catch (const CheckpointError& e) {
            EXPECT_EQ(e.kind(), CheckpointError::Kind::Corrupt);
        }
    }
    auto flipped = bytes;
    flipped[40] ^= 0x10;
    try {
        deserialize_checkpoint(flipped);
        FAIL() << "accepted a flipped payload bit";
    } catch (const CheckpointError& e) {
        EXPECT_EQ(e.kind(), CheckpointError::Kind::Corrupt);
    }
}

TEST(Checkpoint, TruncatedFileOnDisk) {
    const auto path = temp_file("dualsplat_trunc.ckpt");
    save_checkpoint(path, random_checkpoint(5, 4));
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 3);
    EXPECT_THROW(load_checkpoint(path), CheckpointError);
    std::filesystem::remove(path);
}

TEST(Checkpoint, MissingFileIsIoError) {
    try {
        load_checkpoint(temp_file("dualsplat_does_not_exist.ckpt"));
        FAIL();
    } catch (const CheckpointError& e) {
        EXPECT_EQ(e.kind(), CheckpointError::Kind::Io);
    }
}
