// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/image_io.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace dualsplat;

namespace {
std::filesystem::path temp_file(const char* name) { return std::filesystem::temp_directory_path() / name; }
}  // namespace

TEST(Png, RgbRoundTripQuantizes) {
    const Image img = oracle::random_image(13, 7, 3, 1);
    const auto path = temp_file("dualsplat_rgb.png");
    write_png(img, path);
    const Image back = read_png(path);
    ASSERT_TRUE(back.same_shape(img));
    EXPECT_LE(oracle::max_abs_diff(img, back), 0.5 / 255 + 1e-12);
    std::filesystem::remove(path);
}

TEST(Png, GrayRoundTripAndClamp) {
    Image img(4, 3, 1);
    img.data = {0, 1, -3, 7, 0.5, 128.0 / 255, 1, 0, 0, 0, 1, 1};
    const auto path = temp_file("dualsplat_gray.png");
    write_png(img, path);
    const Image back = read_png(path);
    ASSERT_EQ(back.channels, 1);
    EXPECT_EQ(back.at(2, 0), 0.0);
    EXPECT_EQ(back.at(3, 0), 1.0);
    EXPECT_EQ(back.at(1, 1), 128.0 / 255);
    std::filesystem::remove(path);
}

TEST(Png, ErrorsAreIoErrors) {
    EXPECT_THROW(read_png(temp_file("dualsplat_missing.png")), IoError);
    const auto path = temp_file("dualsplat_garbage.png");
    std::ofstream(path) << "not a png";
    EXPECT_THROW(read_png(path), IoError);
    std::filesystem::remove(path);
    EXPECT_THROW(write_png(Image(2, 2, 2), temp_file("dualsplat_2ch.png")), std::exception);
}

TEST(RawDump, BitExactRoundTrip) {
    Image img = oracle::random_image(5, 6, 3, 2, -2, 2);
    img.data[3] = 0.1 + 0.2;
    const auto path = temp_file("dualsplat_raw.f64");
    write_raw(img, path);
    EXPECT_EQ(read_raw(path), img);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 1);
    EXPECT_THROW(read_raw(path), IoError);
    std::filesystem::remove(path);
}
