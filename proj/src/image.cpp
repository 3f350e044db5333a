// Copyright (c) 2026, The DCE Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "dce/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <string>

namespace dce {

ImageRGB::ImageRGB(int height, int width, float fill) : height_(height), width_(width) {
    if (height <= 0 || width <= 0) {
        throw std::invalid_argument("image dims must be positive, got " + std::to_string(height) +
                                    "x" + std::to_string(width));
    }
    if (!(fill >= 0.0f && fill <= 1.0f)) throw std::invalid_argument("image fill outside [0,1]");
    data_.assign(static_cast<std::size_t>(kChannels) * height * width, fill);
}

ImageRGB::ImageRGB(int height, int width, std::vector<float> chw)
    : height_(height), width_(width), data_(std::move(chw)) {
    if (height <= 0 || width <= 0) {
        throw std::invalid_argument("image dims must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(kChannels) * height * width) {
        throw std::invalid_argument("image buffer holds " + std::to_string(data_.size()) +
                                    " values, expected 3x" + std::to_string(height) + "x" +
                                    std::to_string(width));
    }
    for (float v : data_) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw std::invalid_argument("image value " + std::to_string(v) + " outside [0,1]");
        }
    }
}

template <typename T>
ImageRGB ImageRGB::from_tensor(const Tensor<T>& t) {
    if (t.rank() != 3 || t.dim(0) != kChannels) {
        throw DimensionError("image tensor must be [3,H,W], got " + shape_str(t.dims()));
    }
    std::vector<float> chw(t.numel());
    const auto src = t.data();
    for (std::size_t i = 0; i < chw.size(); ++i) {
        const double v = static_cast<double>(src[i]);
        chw[i] = std::isfinite(v) ? static_cast<float>(std::clamp(v, 0.0, 1.0)) : 0.0f;
    }
    return ImageRGB(t.dim(1), t.dim(2), std::move(chw));
}

template <typename T>
Tensor<T> ImageRGB::to_tensor() const {
    std::vector<T> v(data_.begin(), data_.end());
    return Tensor<T>(Shape{kChannels, height_, width_}, std::move(v));
}

template ImageRGB ImageRGB::from_tensor<float>(const Tensor<float>&);
template ImageRGB ImageRGB::from_tensor<double>(const Tensor<double>&);
template Tensor<float> ImageRGB::to_tensor<float>() const;
template Tensor<double> ImageRGB::to_tensor<double>() const;

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

unsigned char to_byte(float v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

}  // namespace

ImageRGB read_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw ImageIOError("cannot open " + path.string());
    unsigned char sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw ImageIOError(path.string() + " is not a PNG file");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIOError("libpng initialisation failed");
    }
    std::vector<unsigned char> pixels;
    std::vector<png_bytep> rows;
    png_uint_32 width = 0, height = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIOError("corrupt PNG data in " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    width = png_get_image_width(png, info);
    height = png_get_image_height(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) {
        png_set_strip_alpha(png);
    }
    png_read_update_info(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    if (stride != static_cast<std::size_t>(width) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIOError("unsupported PNG layout in " + path.string());
    }
    pixels.resize(stride * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const int h = static_cast<int>(height), w = static_cast<int>(width);
    std::vector<float> chw(static_cast<std::size_t>(3) * h * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                chw[(static_cast<std::size_t>(c) * h + y) * w + x] =
                    static_cast<float>(pixels[static_cast<std::size_t>(y) * stride + x * 3 + c]) /
                    255.0f;
            }
        }
    }
    return ImageRGB(h, w, std::move(chw));
}

void write_png(const std::filesystem::path& path, const ImageRGB& image) {
    if (image.empty()) throw ImageIOError("refusing to write an empty image to " + path.string());
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw ImageIOError("cannot create " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw ImageIOError("libpng initialisation failed");
    }
    const int h = image.height(), w = image.width();
    std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ImageIOError("failed writing " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) row[static_cast<std::size_t>(x) * 3 + c] = to_byte(image.at(c, y, x));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

ImageRGB downsample_box(const ImageRGB& image, int factor) {
    if (factor < 1 || image.height() % factor != 0 || image.width() % factor != 0) {
        throw DimensionError("downsample_box: factor " + std::to_string(factor) + " does not divide " +
                             std::to_string(image.height()) + "x" + std::to_string(image.width()));
    }
    const int h = image.height() / factor, w = image.width() / factor;
    std::vector<float> out(static_cast<std::size_t>(3) * h * w);
    const double inv = 1.0 / (factor * factor);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double s = 0;
                for (int i = 0; i < factor; ++i)
                    for (int j = 0; j < factor; ++j) s += image.at(c, y * factor + i, x * factor + j);
                out[(static_cast<std::size_t>(c) * h + y) * w + x] = static_cast<float>(std::clamp(s * inv, 0.0, 1.0));
            }
    return ImageRGB(h, w, std::move(out));
}

ImageRGB quantize8(const ImageRGB& image) {
    std::vector<float> v(image.data().begin(), image.data().end());
    for (float& x : v) x = static_cast<float>(to_byte(x)) / 255.0f;
    return ImageRGB(image.height(), image.width(), std::move(v));
}

}  // namespace dce
