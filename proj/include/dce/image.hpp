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

#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "dce/tensor.hpp"

namespace dce {

class ImageIOError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

/// RGB image with values in [0,1], stored channel-major (C,H,W).
class ImageRGB {
 public:
    static constexpr int kChannels = 3;

    ImageRGB() = default;
    ImageRGB(int height, int width, float fill = 0.0f);
    /// Throws std::invalid_argument if any value is outside [0,1] or not finite.
    ImageRGB(int height, int width, std::vector<float> chw);

    /// Clamps into [0,1]; non-finite values become 0.
    template <typename T>
    static ImageRGB from_tensor(const Tensor<T>& t);
    template <typename T>
    Tensor<T> to_tensor() const;

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return kChannels; }
    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }

    float at(int c, int y, int x) const { return data_[index(c, y, x)]; }
    /// Callers must keep the value in [0,1].
    void set(int c, int y, int x, float v) { data_[index(c, y, x)] = v; }

    std::span<const float> data() const { return data_; }

    friend bool operator==(const ImageRGB&, const ImageRGB&) = default;

 private:
    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
    }

    int height_ = 0;
    int width_ = 0;
    std::vector<float> data_;
};

/// 8-bit RGB PNG. Gray and RGBA inputs are converted (alpha dropped).
/// Values are divided by 255 on load.
ImageRGB read_png(const std::filesystem::path& path);
/// Rounds to nearest 8-bit value. Output bytes depend only on the pixels.
void write_png(const std::filesystem::path& path, const ImageRGB& image);

/// Mean over non-overlapping factor x factor blocks; dims must divide.
ImageRGB downsample_box(const ImageRGB& image, int factor);

/// Quantizes to 8 bits and back, the same values a PNG round trip yields.
ImageRGB quantize8(const ImageRGB& image);

}  // namespace dce
