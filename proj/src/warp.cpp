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

#include "dce/warp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "dce/ops.hpp"

namespace dce {

using detail::require;

template <typename T>
AffineParams AffineParams::from_tensor(const Tensor<T>& t) {
    require(t.numel() == 6, "affine params need 6 values, got " + shape_str(t.dims()));
    AffineParams p;
    for (int i = 0; i < 6; ++i) p.a[i] = static_cast<double>(t[i]);
    return p;
}

template <typename T>
Tensor<T> AffineParams::to_tensor() const {
    std::vector<T> v(a.begin(), a.end());
    return Tensor<T>(Shape{6}, std::move(v));
}

template AffineParams AffineParams::from_tensor<float>(const Tensor<float>&);
template AffineParams AffineParams::from_tensor<double>(const Tensor<double>&);
template Tensor<float> AffineParams::to_tensor<float>() const;
template Tensor<double> AffineParams::to_tensor<double>() const;

bool AffineParams::is_finite() const {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

AffineParams compose_affine(const AffineParams& outer, const AffineParams& inner) {
    const auto& o = outer.a;
    const auto& i = inner.a;
    return {{o[0] * i[0] + o[1] * i[3], o[0] * i[1] + o[1] * i[4], o[0] * i[2] + o[1] * i[5] + o[2],
             o[3] * i[0] + o[4] * i[3], o[3] * i[1] + o[4] * i[4],
             o[3] * i[2] + o[4] * i[5] + o[5]}};
}

// --- Homography -------------------------------------------------------------

Homography::Homography(const std::array<double, 9>& h) : h_(h) {
    if (std::abs(h_[8]) < 1e-12) {
        throw DegenerateTransformError("homography bottom-right entry is zero; cannot normalize");
    }
    const double s = 1.0 / h_[8];
    for (double& v : h_) v *= s;
    h_[8] = 1.0;
    if (!(std::abs(determinant()) > 1e-9)) {
        throw DegenerateTransformError("homography is singular (|det| <= 1e-9)");
    }
}

Homography Homography::from_affine(const AffineParams& a) {
    return Homography({a.a[0], a.a[1], a.a[2], a.a[3], a.a[4], a.a[5], 0.0, 0.0, 1.0});
}

Homography Homography::from_correspondences(const std::array<Point2, 4>& src,
                                            const std::array<Point2, 4>& dst) {
    // Unknowns h11..h32 with h33 = 1; two equations per correspondence.
    Eigen::Matrix<double, 8, 8> m;
    Eigen::Matrix<double, 8, 1> b;
    for (int i = 0; i < 4; ++i) {
        const double x = src[i].x, y = src[i].y, u = dst[i].x, v = dst[i].y;
        m.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y;
        m.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y;
        b(2 * i) = u;
        b(2 * i + 1) = v;
    }
    Eigen::FullPivLU<Eigen::Matrix<double, 8, 8>> lu(m);
    if (!lu.isInvertible()) {
        throw DegenerateTransformError("correspondences are degenerate (collinear points?)");
    }
    const Eigen::Matrix<double, 8, 1> x = lu.solve(b);
    return Homography({x(0), x(1), x(2), x(3), x(4), x(5), x(6), x(7), 1.0});
}

double Homography::determinant() const {
    const auto& m = h_;
    return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
           m[2] * (m[3] * m[7] - m[4] * m[6]);
}

Homography Homography::inverse() const {
    const auto& m = h_;
    const double det = determinant();
    std::array<double, 9> inv{
        (m[4] * m[8] - m[5] * m[7]) / det, (m[2] * m[7] - m[1] * m[8]) / det,
        (m[1] * m[5] - m[2] * m[4]) / det, (m[5] * m[6] - m[3] * m[8]) / det,
        (m[0] * m[8] - m[2] * m[6]) / det, (m[2] * m[3] - m[0] * m[5]) / det,
        (m[3] * m[7] - m[4] * m[6]) / det, (m[1] * m[6] - m[0] * m[7]) / det,
        (m[0] * m[4] - m[1] * m[3]) / det};
    return Homography(inv);
}

Point2 Homography::apply(Point2 p) const {
    const auto& m = h_;
    const double w = m[6] * p.x + m[7] * p.y + m[8];
    if (std::abs(w) < 1e-6) {
        throw DegenerateTransformError("homogeneous denominator vanishes at (" +
                                       std::to_string(p.x) + ", " + std::to_string(p.y) + ")");
    }
    return {(m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w};
}

Homography Homography::operator*(const Homography& rhs) const {
    std::array<double, 9> r{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += h_[i * 3 + k] * rhs.h_[k * 3 + j];
            r[i * 3 + j] = s;
        }
    }
    return Homography(r);
}

// --- Differentiable sampling -----------------------------------------------

namespace {

/// Bilinear cell for one pixel-space coordinate. Positions within rounding
/// noise of an integer snap onto it so identity grids are lossless.
struct Cell {
    int lo;
    double frac;
};

template <typename T>
Cell locate(double pixel, int extent) {
    const double tol = 4.0 * std::numeric_limits<T>::epsilon() * std::max(1, extent);
    const double nearest = std::round(pixel);
    if (std::abs(pixel - nearest) <= tol) pixel = nearest;
    const double lo = std::floor(pixel);
    return {static_cast<int>(lo), pixel - lo};
}

}  // namespace

template <typename T>
SampleGrid<T> affine_grid(Tape<T>& tape, const Tensor<T>& theta, int h_out, int w_out) {
    require(h_out >= 2 && w_out >= 2, "affine_grid: output must be at least 2x2, got " +
                                          std::to_string(h_out) + "x" + std::to_string(w_out));
    require(theta.numel() == 6, "affine_grid: theta needs 6 values, got " + shape_str(theta.dims()));
    const auto a = theta.data();
    Tensor<T> coords(Shape{2, h_out, w_out});
    auto c = coords.mutable_data();
    const std::size_t plane = static_cast<std::size_t>(h_out) * w_out;
    for (int y = 0; y < h_out; ++y) {
        const T yt = static_cast<T>(static_cast<double>(2 * y - (h_out - 1)) / (h_out - 1));
        for (int x = 0; x < w_out; ++x) {
            const T xt = static_cast<T>(static_cast<double>(2 * x - (w_out - 1)) / (w_out - 1));
            const std::size_t i = static_cast<std::size_t>(y) * w_out + x;
            c[i] = a[0] * xt + a[1] * yt + a[2];
            c[plane + i] = a[3] * xt + a[4] * yt + a[5];
        }
    }
    if (theta.requires_grad()) {
        tape.record({theta}, coords, [theta, coords, h_out, w_out]() mutable {
            const auto g = coords.grad();
            const std::size_t plane = static_cast<std::size_t>(h_out) * w_out;
            T acc[6] = {0, 0, 0, 0, 0, 0};
            for (int y = 0; y < h_out; ++y) {
                const T yt = static_cast<T>(static_cast<double>(2 * y - (h_out - 1)) / (h_out - 1));
                for (int x = 0; x < w_out; ++x) {
                    const T xt =
                        static_cast<T>(static_cast<double>(2 * x - (w_out - 1)) / (w_out - 1));
                    const std::size_t i = static_cast<std::size_t>(y) * w_out + x;
                    const T gx = g[i], gy = g[plane + i];
                    acc[0] += gx * xt;
                    acc[1] += gx * yt;
                    acc[2] += gx;
                    acc[3] += gy * xt;
                    acc[4] += gy * yt;
                    acc[5] += gy;
                }
            }
            auto d = theta.grad_buffer();
            for (int k = 0; k < 6; ++k) d[k] += acc[k];
        });
    }
    return {coords};
}

template <typename T>
SampleGrid<T> affine_grid(const AffineParams& a, int h_out, int w_out) {
    Tape<T> scratch;
    return affine_grid(scratch, a.to_tensor<T>(), h_out, w_out);
}

template <typename T>
Tensor<T> grid_sample(Tape<T>& tape, const Tensor<T>& src, const SampleGrid<T>& grid) {
    require(src.rank() == 3, "grid_sample: source must be [C,H,W], got " + shape_str(src.dims()));
    require(grid.coords.rank() == 3 && grid.coords.dim(0) == 2,
            "grid_sample: grid must be [2,h,w], got " + shape_str(grid.coords.dims()));
    const int ch = src.dim(0), sh = src.dim(1), sw = src.dim(2);
    const int oh = grid.height(), ow = grid.width();
    const std::size_t plane = static_cast<std::size_t>(oh) * ow;
    const std::size_t src_plane = static_cast<std::size_t>(sh) * sw;
    Tensor<T> out(Shape{ch, oh, ow});
    auto y = out.mutable_data();
    const auto s = src.data();
    const auto c = grid.coords.data();

    for (std::size_t i = 0; i < plane; ++i) {
        const Cell cx = locate<T>(to_pixel(static_cast<double>(c[i]), sw), sw);
        const Cell cy = locate<T>(to_pixel(static_cast<double>(c[plane + i]), sh), sh);
        const T fx = static_cast<T>(cx.frac), fy = static_cast<T>(cy.frac);
        const T w[4] = {(T(1) - fx) * (T(1) - fy), fx * (T(1) - fy), (T(1) - fx) * fy, fx * fy};
        const int xs[4] = {cx.lo, cx.lo + 1, cx.lo, cx.lo + 1};
        const int ys[4] = {cy.lo, cy.lo, cy.lo + 1, cy.lo + 1};
        for (int k = 0; k < ch; ++k) {
            T v = 0;
            for (int t = 0; t < 4; ++t) {
                if (w[t] == T(0)) continue;
                if (xs[t] < 0 || xs[t] >= sw || ys[t] < 0 || ys[t] >= sh) continue;
                v += w[t] * s[k * src_plane + static_cast<std::size_t>(ys[t]) * sw + xs[t]];
            }
            y[k * plane + i] = v;
        }
    }

    const Tensor<T> coords = grid.coords;
    if (Tape<T>::needs_grad({&src, &coords})) {
        tape.record({src, coords}, out, [src, coords, out]() mutable {
            const int ch = src.dim(0), sh = src.dim(1), sw = src.dim(2);
            const int oh = coords.dim(1), ow = coords.dim(2);
            const std::size_t plane = static_cast<std::size_t>(oh) * ow;
            const std::size_t src_plane = static_cast<std::size_t>(sh) * sw;
            const auto g = out.grad();
            const auto s = src.data();
            const auto c = coords.data();
            std::span<T> ds = src.requires_grad() ? src.grad_buffer() : std::span<T>();
            std::span<T> dc = coords.requires_grad() ? coords.grad_buffer() : std::span<T>();
            const T half_w = static_cast<T>(0.5 * (sw - 1));
            const T half_h = static_cast<T>(0.5 * (sh - 1));
            for (std::size_t i = 0; i < plane; ++i) {
                const Cell cx = locate<T>(to_pixel(static_cast<double>(c[i]), sw), sw);
                const Cell cy = locate<T>(to_pixel(static_cast<double>(c[plane + i]), sh), sh);
                const T fx = static_cast<T>(cx.frac), fy = static_cast<T>(cy.frac);
                const int x0 = cx.lo, y0 = cy.lo;
                auto inside = [&](int yy, int xx) { return xx >= 0 && xx < sw && yy >= 0 && yy < sh; };
                const bool in00 = inside(y0, x0), in01 = inside(y0, x0 + 1);
                const bool in10 = inside(y0 + 1, x0), in11 = inside(y0 + 1, x0 + 1);
                T gxs = 0, gys = 0;
                for (int k = 0; k < ch; ++k) {
                    const T go = g[k * plane + i];
                    if (go == T(0)) continue;
                    const std::size_t base = k * src_plane;
                    auto at = [&](bool in, int yy, int xx) {
                        return in ? s[base + static_cast<std::size_t>(yy) * sw + xx] : T(0);
                    };
                    if (!dc.empty()) {
                        const T v00 = at(in00, y0, x0), v01 = at(in01, y0, x0 + 1);
                        const T v10 = at(in10, y0 + 1, x0), v11 = at(in11, y0 + 1, x0 + 1);
                        gxs += go * ((T(1) - fy) * (v01 - v00) + fy * (v11 - v10));
                        gys += go * ((T(1) - fx) * (v10 - v00) + fx * (v11 - v01));
                    }
                    if (!ds.empty()) {
                        auto put = [&](bool in, int yy, int xx, T wt) {
                            if (in) ds[base + static_cast<std::size_t>(yy) * sw + xx] += go * wt;
                        };
                        put(in00, y0, x0, (T(1) - fx) * (T(1) - fy));
                        put(in01, y0, x0 + 1, fx * (T(1) - fy));
                        put(in10, y0 + 1, x0, (T(1) - fx) * fy);
                        put(in11, y0 + 1, x0 + 1, fx * fy);
                    }
                }
                if (!dc.empty()) {
                    dc[i] += gxs * half_w;
                    dc[plane + i] += gys * half_h;
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> center_crop(Tape<T>& tape, const Tensor<T>& src, int h_out, int w_out) {
    require(src.rank() == 3, "center_crop: source must be [C,H,W], got " + shape_str(src.dims()));
    const int ch = src.dim(0), sh = src.dim(1), sw = src.dim(2);
    require(h_out >= 1 && w_out >= 1 && h_out <= sh && w_out <= sw,
            "center_crop: window " + std::to_string(h_out) + "x" + std::to_string(w_out) +
                " does not fit in " + shape_str(src.dims()));
    const int oy = (sh - h_out) / 2, ox = (sw - w_out) / 2;
    Tensor<T> out(Shape{ch, h_out, w_out});
    auto y = out.mutable_data();
    const auto s = src.data();
    std::size_t o = 0;
    for (int k = 0; k < ch; ++k) {
        for (int r = 0; r < h_out; ++r) {
            const std::size_t base = (static_cast<std::size_t>(k) * sh + oy + r) * sw + ox;
            for (int q = 0; q < w_out; ++q) y[o++] = s[base + q];
        }
    }
    if (src.requires_grad()) {
        tape.record({src}, out, [src, out, oy, ox]() mutable {
            const int ch = src.dim(0), sh = src.dim(1), sw = src.dim(2);
            const int h_out = out.dim(1), w_out = out.dim(2);
            const auto g = out.grad();
            auto ds = src.grad_buffer();
            std::size_t o = 0;
            for (int k = 0; k < ch; ++k) {
                for (int r = 0; r < h_out; ++r) {
                    const std::size_t base = (static_cast<std::size_t>(k) * sh + oy + r) * sw + ox;
                    for (int q = 0; q < w_out; ++q) ds[base + q] += g[o++];
                }
            }
        });
    }
    return out;
}

#define DCE_INSTANTIATE_WARP(T)                                                             \
    template SampleGrid<T> affine_grid(Tape<T>&, const Tensor<T>&, int, int);               \
    template SampleGrid<T> affine_grid<T>(const AffineParams&, int, int);                   \
    template Tensor<T> grid_sample(Tape<T>&, const Tensor<T>&, const SampleGrid<T>&);       \
    template Tensor<T> center_crop(Tape<T>&, const Tensor<T>&, int, int);

DCE_INSTANTIATE_WARP(float)
DCE_INSTANTIATE_WARP(double)

// --- Generator-side projective warp -----------------------------------------

std::pair<ImageRGB, CoverageMask> warp_homography(const ImageRGB& src, const Homography& h,
                                                  int h_out, int w_out) {
    require(h_out >= 1 && w_out >= 1, "warp_homography: output dims must be positive");
    const int sh = src.height(), sw = src.width();
    std::vector<float> out(static_cast<std::size_t>(3) * h_out * w_out);
    CoverageMask mask{h_out, w_out, std::vector<float>(static_cast<std::size_t>(h_out) * w_out)};
    const std::size_t plane = static_cast<std::size_t>(h_out) * w_out;
    for (int y = 0; y < h_out; ++y) {
        const double yt = to_normalized(y, h_out);
        for (int x = 0; x < w_out; ++x) {
            const Point2 p = h.apply({to_normalized(x, w_out), yt});
            const Cell cx = locate<double>(to_pixel(p.x, sw), sw);
            const Cell cy = locate<double>(to_pixel(p.y, sh), sh);
            const double w[4] = {(1 - cx.frac) * (1 - cy.frac), cx.frac * (1 - cy.frac),
                                 (1 - cx.frac) * cy.frac, cx.frac * cy.frac};
            const int xs[4] = {cx.lo, cx.lo + 1, cx.lo, cx.lo + 1};
            const int ys[4] = {cy.lo, cy.lo, cy.lo + 1, cy.lo + 1};
            double acc[3] = {0, 0, 0};
            double cover = 0;
            for (int t = 0; t < 4; ++t) {
                if (w[t] == 0.0) continue;
                if (xs[t] < 0 || xs[t] >= sw || ys[t] < 0 || ys[t] >= sh) continue;
                cover += w[t];
                for (int k = 0; k < 3; ++k) acc[k] += w[t] * src.at(k, ys[t], xs[t]);
            }
            const std::size_t i = static_cast<std::size_t>(y) * w_out + x;
            for (int k = 0; k < 3; ++k) {
                out[k * plane + i] = static_cast<float>(std::clamp(acc[k], 0.0, 1.0));
            }
            mask.values[i] = static_cast<float>(std::clamp(cover, 0.0, 1.0));
        }
    }
    return {ImageRGB(h_out, w_out, std::move(out)), std::move(mask)};
}

ImageRGB resize_bilinear(const ImageRGB& src, int h_out, int w_out) {
    if (src.height() == h_out && src.width() == w_out) return src;
    return warp_homography(src, Homography::identity(), h_out, w_out).first;
}

}  // namespace dce
