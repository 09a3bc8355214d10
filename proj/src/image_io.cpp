// SPDX-License-Identifier: Apache-2.0
#include "dualsplat/image_io.hpp"

#include "binary_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

namespace dualsplat {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

constexpr char kRawMagic[8] = {'D', 'S', 'F', '6', '4', 0, 0, 0};

}  // namespace

void write_png(const Image& image, const std::filesystem::path& path) {
    if (image.channels != 1 && image.channels != 3)
        throw ContractError("write_png: only 1 or 3 channels supported");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("cannot open " + path.string() + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("libpng initialization failed");
    }
    std::vector<png_byte> row(static_cast<std::size_t>(image.width) * image.channels);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, image.width, image.height, 8,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    // No timestamps or gamma chunks, so identical images give identical files.
    png_write_info(png, info);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < image.channels; ++c) {
                const double v = std::clamp(image.at(x, y, c), 0.0, 1.0);
                row[static_cast<std::size_t>(x) * image.channels + c] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("libpng initialization failed");
    }
    Image image;
    std::vector<png_byte> row;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("corrupt PNG " + path.string());
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int color_type = png_get_color_type(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);
    const int channels = png_get_channels(png, info);
    image = Image(width, height, channels);
    row.resize(png_get_rowbytes(png, info));
    for (int y = 0; y < height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < channels; ++c)
                image.at(x, y, c) = row[static_cast<std::size_t>(x) * channels + c] / 255.0;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return image;
}

void write_raw(const Image& image, const std::filesystem::path& path) {
    ByteWriter w;
    w.bytes(kRawMagic, sizeof kRawMagic);
    w.i32(image.width);
    w.i32(image.height);
    w.i32(image.channels);
    for (double v : image.data) w.f64(v);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(w.buffer().data()), static_cast<std::streamsize>(w.buffer().size()));
    if (!out) throw IoError("failed writing " + path.string());
}

Image read_raw(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    ByteReader r(bytes);
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (!std::equal(magic, magic + 8, kRawMagic)) throw IoError("not a raw float image: " + path.string());
    const int w = r.i32();
    const int h = r.i32();
    const int c = r.i32();
    if (w <= 0 || h <= 0 || c <= 0) throw IoError("bad raw image header: " + path.string());
    Image image(w, h, c);
    for (double& v : image.data) v = r.f64();
    if (!r.at_end()) throw IoError("trailing bytes in " + path.string());
    return image;
}

}  // namespace dualsplat
