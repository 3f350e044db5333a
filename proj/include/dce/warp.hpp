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

#include <array>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dce/image.hpp"
#include "dce/tensor.hpp"

// Spatial transformer machinery.
//
// Coordinates are normalized with the align-corners convention: -1 is the
// centre of the first pixel and +1 the centre of the last, on each axis.
// Transforms map OUTPUT coordinates to SOURCE coordinates (inverse warping).

namespace dce {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Point2&, const Point2&) = default;
};

inline double to_normalized(double pixel, int extent) {
    return extent > 1 ? 2.0 * pixel / (extent - 1) - 1.0 : 0.0;
}
inline double to_pixel(double normalized, int extent) {
    return (normalized + 1.0) * 0.5 * (extent - 1);
}

/// Row-major 2x3 matrix [a11 a12 a13; a21 a22 a23].
struct AffineParams {
    std::array<double, 6> a{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

    static AffineParams identity() { return {}; }
    static AffineParams scaling(double s) { return {{s, 0.0, 0.0, 0.0, s, 0.0}}; }
    static AffineParams translation(double tx, double ty) { return {{1.0, 0.0, tx, 0.0, 1.0, ty}}; }

    template <typename T>
    static AffineParams from_tensor(const Tensor<T>& t);
    template <typename T>
    Tensor<T> to_tensor() const;

    Point2 apply(Point2 p) const {
        return {a[0] * p.x + a[1] * p.y + a[2], a[3] * p.x + a[4] * p.y + a[5]};
    }
    bool is_finite() const;

    friend bool operator==(const AffineParams&, const AffineParams&) = default;
};

/// Parameters of resampling with `outer`, then resampling that result with
/// `inner`: the product of their homogeneous 3x3 extensions.
AffineParams compose_affine(const AffineParams& outer, const AffineParams& inner);

class DegenerateTransformError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

/// Row-major 3x3 projective matrix on homogeneous normalized coordinates,
/// scaled so the bottom-right entry is 1.
class Homography {
 public:
    Homography() : h_{1, 0, 0, 0, 1, 0, 0, 0, 1} {}
    /// Throws DegenerateTransformError when h[8] is ~0 or |det| <= 1e-9.
    explicit Homography(const std::array<double, 9>& h);

    static Homography identity() { return {}; }
    static Homography from_affine(const AffineParams& a);
    /// Exact fit of the map src[i] -> dst[i] from four correspondences.
    static Homography from_correspondences(const std::array<Point2, 4>& src,
                                           const std::array<Point2, 4>& dst);

    const std::array<double, 9>& matrix() const { return h_; }
    double determinant() const;
    Homography inverse() const;
    /// Perspective divide; throws when |w| < 1e-6.
    Point2 apply(Point2 p) const;
    Homography operator*(const Homography& rhs) const;

 private:
    std::array<double, 9> h_;
};

/// Normalized source coordinates for every output pixel, dims [2, h, w]
/// (x plane then y plane).
template <typename T>
struct SampleGrid {
    Tensor<T> coords;
    int height() const { return coords.dim(1); }
    int width() const { return coords.dim(2); }
};

/// Differentiable with respect to `theta` (6 elements).
template <typename T>
SampleGrid<T> affine_grid(Tape<T>& tape, const Tensor<T>& theta, int h_out, int w_out);

template <typename T>
SampleGrid<T> affine_grid(const AffineParams& a, int h_out, int w_out);

/// Bilinear sampling with per-tap zero padding. Differentiable with respect
/// to both the source values and the grid coordinates; the coordinate
/// gradient uses the floor cell, so it is one-sided on integer positions.
template <typename T>
Tensor<T> grid_sample(Tape<T>& tape, const Tensor<T>& src, const SampleGrid<T>& grid);

/// Centred window, offset floor((H-h)/2), floor((W-w)/2).
template <typename T>
Tensor<T> center_crop(Tape<T>& tape, const Tensor<T>& src, int h_out, int w_out);

/// Fraction of bilinear weight that fell inside the source, per output pixel.
struct CoverageMask {
    int height = 0;
    int width = 0;
    std::vector<float> values;
    float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Inverse warp: each output pixel is mapped through `h` into the source.
/// Colours are weighted by in-range bilinear mass (premultiplied by coverage).
std::pair<ImageRGB, CoverageMask> warp_homography(const ImageRGB& src, const Homography& h,
                                                  int h_out, int w_out);

/// Bilinear resize through the identity transform.
ImageRGB resize_bilinear(const ImageRGB& src, int h_out, int w_out);

}  // namespace dce
