#pragma once

#include <png.h>

#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "psforge/core/error.hpp"

namespace psforge {

// Decoded PNG. Samples are kept at their native depth: 0..255 for 8-bit
// files, 0..65535 for 16-bit files, channel-interleaved row-major.
struct PngImage {
    int width = 0;
    int height = 0;
    int channels = 0;
    int bit_depth = 0;
    std::vector<uint16_t> samples;

    uint16_t max_value() const { return bit_depth == 16 ? 65535 : 255; }
    uint16_t at(int r, int c, int ch) const {
        return samples[(size_t(r) * width + c) * channels + ch];
    }
};

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

inline PngImage read_png(const std::string& path) {
    detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("read_png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("read_png: libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("read_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("read_png: decode error in " + path);
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    // Normalize exotic layouts: expand palettes and sub-byte gray, strip
    // alpha, keep 8 vs 16 bit distinction.
    png_set_palette_to_rgb(png);
    if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    png_set_strip_alpha(png);
    if (png_get_bit_depth(png, info) == 16) png_set_swap(png);  // files are big-endian
    png_read_update_info(png, info);

    PngImage out;
    out.width = int(png_get_image_width(png, info));
    out.height = int(png_get_image_height(png, info));
    out.bit_depth = int(png_get_bit_depth(png, info));
    out.channels = int(png_get_channels(png, info));
    out.samples.resize(size_t(out.width) * out.height * out.channels);

    const size_t row_bytes = png_get_rowbytes(png, info);
    std::vector<unsigned char> row(row_bytes);
    for (int r = 0; r < out.height; ++r) {
        png_read_row(png, row.data(), nullptr);
        uint16_t* dst = &out.samples[size_t(r) * out.width * out.channels];
        if (out.bit_depth == 16) {
            const uint16_t* src = reinterpret_cast<const uint16_t*>(row.data());
            for (int i = 0; i < out.width * out.channels; ++i) dst[i] = src[i];
        } else {
            for (int i = 0; i < out.width * out.channels; ++i) dst[i] = row[i];
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

namespace detail {

inline void write_png_impl(const std::string& path, int width, int height, int channels,
                           int bit_depth, const uint16_t* samples) {
    detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("write_png: cannot open " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("write_png: libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("write_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("write_png: encode error in " + path);
    }

    png_init_io(png, fp.get());
    const int color = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), bit_depth, color,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (bit_depth == 16) png_set_swap(png);

    std::vector<unsigned char> row(size_t(width) * channels * (bit_depth / 8));
    for (int r = 0; r < height; ++r) {
        const uint16_t* src = samples + size_t(r) * width * channels;
        if (bit_depth == 16) {
            uint16_t* dst = reinterpret_cast<uint16_t*>(row.data());
            for (int i = 0; i < width * channels; ++i) dst[i] = src[i];
        } else {
            for (int i = 0; i < width * channels; ++i) row[i] = static_cast<unsigned char>(src[i]);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline void write_png_gray8(const std::string& path, int width, int height,
                            std::span<const uint16_t> samples) {
    if (samples.size() != size_t(width) * height) throw DataError("write_png_gray8: size mismatch");
    detail::write_png_impl(path, width, height, 1, 8, samples.data());
}

inline void write_png_gray16(const std::string& path, int width, int height,
                             std::span<const uint16_t> samples) {
    if (samples.size() != size_t(width) * height)
        throw DataError("write_png_gray16: size mismatch");
    detail::write_png_impl(path, width, height, 1, 16, samples.data());
}

inline void write_png_rgb16(const std::string& path, int width, int height,
                            std::span<const uint16_t> samples) {
    if (samples.size() != size_t(width) * height * 3)
        throw DataError("write_png_rgb16: size mismatch");
    detail::write_png_impl(path, width, height, 3, 16, samples.data());
}

}  // namespace psforge
