// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "dualsplat/types.hpp"

#include <filesystem>
#include <stdexcept>

namespace dualsplat {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 8-bit PNG, 1 (gray) or 3 (RGB) channels. Values are clamped to [0,1]
/// and rounded to the nearest level.
void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

/// Raw float dump: magic "DSF64\0\0\0", int32 width, height, channels, then
/// width*height*channels little-endian IEEE-754 doubles.
void write_raw(const Image& image, const std::filesystem::path& path);
Image read_raw(const std::filesystem::path& path);

}  // namespace dualsplat
