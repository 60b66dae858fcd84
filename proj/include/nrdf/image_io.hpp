#pragma once

// File I/O for 8-bit RGB PNG (libpng) and single-channel float32 PFM
// ("Pf", negative scale = little-endian).

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>

#include "nrdf/core.hpp"

namespace nrdf {

inline void write_png_rgb8(const std::string& path, const Image& img) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), std::fclose);
    if (!fp) throw std::runtime_error("png: cannot open " + path + " for write");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw std::runtime_error("png: init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png: write failed for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const float* px = img.px(x, y);
            for (int c = 0; c < 3; ++c) {
                float v = std::clamp(px[c], 0.f, 1.f);
                row[3 * x + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0f));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline Image read_png_rgb8(const std::string& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), std::fclose);
    if (!fp) throw std::runtime_error("png: cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw std::runtime_error("png: init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png: read failed for " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    // normalize everything to 8-bit RGB
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);
    int w = static_cast<int>(png_get_image_width(png, info));
    int h = static_cast<int>(png_get_image_height(png, info));
    Image img(w, h);
    std::vector<unsigned char> row(static_cast<size_t>(w) * 3);
    for (int y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.px(x, y)[c] = row[3 * x + c] / 255.0f;
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

// PFM stores rows bottom-to-top.
inline void write_pfm(const std::string& path, const DepthMap& map) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("pfm: cannot open " + path + " for write");
    os << "Pf\n" << map.width << " " << map.height << "\n-1.0\n";
    for (int y = map.height - 1; y >= 0; --y)
        os.write(reinterpret_cast<const char*>(&map.data[static_cast<size_t>(y) * map.width]),
                 static_cast<std::streamsize>(map.width) * 4);
    if (!os) throw std::runtime_error("pfm: write failed for " + path);
}

inline DepthMap read_pfm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("pfm: cannot open " + path);
    std::string magic;
    is >> magic;
    if (magic != "Pf")
        throw std::runtime_error("pfm: " + path + " is not single-channel (expected Pf)");
    int w = 0, h = 0;
    double scale = 0;
    is >> w >> h >> scale;
    if (!is || w <= 0 || h <= 0) throw std::runtime_error("pfm: bad header in " + path);
    if (scale >= 0)
        throw std::runtime_error("pfm: big-endian data not supported in " + path);
    is.get();  // single whitespace after the scale line
    DepthMap map(w, h);
    for (int y = h - 1; y >= 0; --y)
        is.read(reinterpret_cast<char*>(&map.data[static_cast<size_t>(y) * w]),
                static_cast<std::streamsize>(w) * 4);
    if (!is) throw std::runtime_error("pfm: truncated data in " + path);
    return map;
}

}  // namespace nrdf
