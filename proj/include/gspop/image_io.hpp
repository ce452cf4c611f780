// Copyright Contributors to the gspop Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <gspop/raster.hpp>

#include <png.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

namespace gspop {

/// Raw float32 dump: H * W * 3 values, row-major, channel-interleaved, no header.
template <typename T>
void write_raw_f32(const Image<T>& img, const std::filesystem::path& path) {
    std::vector<float> buf(img.data.size());
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(img.data[i]);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline Image<float> read_raw_f32(const std::filesystem::path& path, int width, int height) {
    Image<float> img(width, height);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(img.data.size() * sizeof(float)) || in.peek() != EOF)
        throw InputError("'" + path.string() + "' is not a " + std::to_string(width) + "x" + std::to_string(height) +
                         " float32 RGB image");
    return img;
}

/// 8-bit RGB PNG of the image clamped to [0, 1].
template <typename T>
void write_png(const Image<T>& img, const std::filesystem::path& path) {
    std::vector<png_byte> rgb(img.data.size());
    for (std::size_t i = 0; i < rgb.size(); ++i) {
        const double v = std::clamp(static_cast<double>(img.data[i]), 0.0, 1.0);
        rgb[i] = static_cast<png_byte>(std::lround(v * 255.0));
    }
    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw Error("cannot open '" + path.string() + "' for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw Error("libpng failed writing '" + path.string() + "'");
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y)
        png_write_row(png, rgb.data() + static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width) * 3);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fclose(fp) != 0) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace gspop
