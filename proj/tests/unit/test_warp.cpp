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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "dce/gradcheck.hpp"
#include "dce/ops.hpp"
#include "dce/warp.hpp"
#include "../support/oracles.hpp"

namespace dce {
namespace {

AffineParams rotation_scale(double deg, double s, double tx = 0, double ty = 0) {
    const double r = deg * std::numbers::pi / 180.0;
    return {{s * std::cos(r), -s * std::sin(r), tx, s * std::sin(r), s * std::cos(r), ty}};
}

// Direct 3x3 product of homogeneous extensions.
AffineParams matmul_oracle(const AffineParams& p, const AffineParams& q) {
    double a[3][3] = {{p.a[0], p.a[1], p.a[2]}, {p.a[3], p.a[4], p.a[5]}, {0, 0, 1}};
    double b[3][3] = {{q.a[0], q.a[1], q.a[2]}, {q.a[3], q.a[4], q.a[5]}, {0, 0, 1}};
    double c[3][3] = {};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
    return {{c[0][0], c[0][1], c[0][2], c[1][0], c[1][1], c[1][2]}};
}

// --- affine_grid ------------------------------------------------------------

TEST(AffineGrid, IdentityThreeByThree) {
    auto g = affine_grid<double>(AffineParams::identity(), 3, 3);
    ASSERT_EQ(g.coords.dims(), (Shape{2, 3, 3}));
    const std::vector<double> axis{-1, 0, 1};
    for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 3; ++x) {
            EXPECT_EQ(g.coords[y * 3 + x], axis[x]);
            EXPECT_EQ(g.coords[9 + y * 3 + x], axis[y]);
        }
    }
}

TEST(AffineGrid, HalfScaleStaysCentral) {
    auto g = affine_grid<double>(AffineParams::scaling(0.5), 9, 7);
    for (double v : g.coords.data()) {
        EXPECT_GE(v, -0.5);
        EXPECT_LE(v, 0.5);
    }
}

TEST(AffineGrid, QuarterShiftOn224Grid) {
    const int w = 224;
    auto g = affine_grid<double>(AffineParams::translation(0.25, 0), 4, w);
    for (int x = 0; x < w; ++x) {
        const double shift = to_pixel(g.coords[x], w) - x;
        EXPECT_NEAR(shift, (0.25 / 2) * (w - 1), 1e-9);
    }
    EXPECT_NEAR(to_pixel(g.coords[0], w), 27.875, 1e-9);
}

TEST(AffineGrid, TooSmallThrows) {
    EXPECT_THROW(affine_grid<float>(AffineParams::identity(), 1, 5), DimensionError);
    EXPECT_THROW(affine_grid<float>(AffineParams::identity(), 5, 1), DimensionError);
}

TEST(AffineParams, IdentityAndTensorRoundTrip) {
    EXPECT_EQ(AffineParams::identity().a, (std::array<double, 6>{1, 0, 0, 0, 1, 0}));
    const AffineParams p{{0.9, 0.1, -0.2, 0.05, 1.1, 0.3}};
    EXPECT_EQ(AffineParams::from_tensor(p.to_tensor<double>()), p);
    EXPECT_THROW(AffineParams::from_tensor(Tensor<double>({5})), DimensionError);
    AffineParams bad = p;
    bad.a[3] = std::nan("");
    EXPECT_FALSE(bad.is_finite());
    EXPECT_TRUE(p.is_finite());
}

// --- grid_sample --------------------------------------------------------------

TEST(GridSample, IdentityIsBitExact) {
    for (auto [h, w] : {std::pair{2, 2}, {7, 5}, {96, 96}, {224, 224}, {33, 180}}) {
        auto img = oracle::random_tensor<float>({3, h, w}, 100 + h * w, 0.0, 1.0);
        Tape<float> tape;
        auto out = grid_sample(tape, img, affine_grid<float>(AffineParams::identity(), h, w));
        ASSERT_EQ(out.dims(), img.dims());
        for (std::size_t i = 0; i < img.numel(); ++i) ASSERT_EQ(out[i], img[i]) << h << "x" << w << " @" << i;
    }
}

TEST(GridSample, CentreOfCheckerIsHalf) {
    Tape<double> tape;
    Tensor<double> src({1, 2, 2}, {0, 1, 1, 0});
    SampleGrid<double> g{Tensor<double>({2, 1, 1}, {0.0, 0.0})};
    EXPECT_DOUBLE_EQ(grid_sample(tape, src, g)[0], 0.5);
}

TEST(GridSample, OutsideSamplesZero) {
    Tape<double> tape;
    Tensor<double> src({1, 2, 2}, 1.0);
    SampleGrid<double> g{Tensor<double>({2, 1, 2}, {-3.0, 5.0, 0.0, 0.0})};
    auto y = grid_sample(tape, src, g);
    EXPECT_EQ(y[0], 0.0);
    EXPECT_EQ(y[1], 0.0);
}

TEST(GridSample, IntegerTranslationMatchesIndexShift) {
    const int h = 12, w = 16;
    auto img = oracle::random_tensor<float>({3, h, w}, 7, 0.0, 1.0);
    for (auto [dx, dy] : {std::pair{3, 0}, {0, -2}, {-5, 4}, {1, 1}, {15, 0}, {-20, 3}}) {
        const AffineParams a = AffineParams::translation(2.0 * dx / (w - 1), 2.0 * dy / (h - 1));
        Tape<float> tape;
        auto out = grid_sample(tape, img, affine_grid<float>(a, h, w));
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const int sx = x + dx, sy = y + dy;
                    const bool in = sx >= 0 && sx < w && sy >= 0 && sy < h;
                    const float want = in ? img[(c * h + sy) * w + sx] : 0.0f;
                    ASSERT_EQ(out[(c * h + y) * w + x], want) << dx << "," << dy << " at " << x << "," << y;
                }
            }
        }
    }
}

TEST(GridSample, GradientWrtAffineMatchesFiniteDifferences) {
    const ImageRGB smooth = oracle::smooth_image(12, 14, 2.0, 5);
    const Tensor<double> src = smooth.to_tensor<double>();
    Rng rng(17);
    int checked = 0;
    for (int trial = 0; trial < 40 && checked < 6; ++trial) {
        const AffineParams a = rotation_scale(rng.uniform(-15, 15), rng.uniform(0.8, 1.2),
                                              rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2));
        // Keep every sample point clear of cell boundaries.
        auto g = affine_grid<double>(a, 8, 9);
        const std::size_t plane = 72;
        double nearest = 1.0;
        for (std::size_t i = 0; i < plane; ++i) {
            const double px = to_pixel(g.coords[i], 14), py = to_pixel(g.coords[plane + i], 12);
            nearest = std::min({nearest, std::abs(px - std::round(px)), std::abs(py - std::round(py))});
        }
        if (nearest < 1e-3) continue;
        ++checked;
        Tensor<double> theta = a.to_tensor<double>();
        auto r = check_gradients({theta}, [&](Tape<double>& t) {
            return random_projection(t, grid_sample(t, src, affine_grid(t, theta, 8, 9)), 3);
        });
        EXPECT_TRUE(r.passed(1e-4)) << r.worst;
    }
    EXPECT_GE(checked, 3);
}

TEST(GridSample, GradientWrtSourceMatchesFiniteDifferences) {
    auto src = oracle::random_tensor<double>({2, 6, 7}, 23);
    const SampleGrid<double> g = affine_grid<double>(rotation_scale(10, 0.9, 0.05, -0.1), 5, 5);
    auto r = check_gradients({src}, [&](Tape<double>& t) { return random_projection(t, grid_sample(t, src, g), 4); });
    EXPECT_TRUE(r.passed(1e-5)) << r.worst;
}

// --- compose_affine ---------------------------------------------------------

TEST(ComposeAffine, IdentityIsNeutral) {
    const AffineParams a{{0.7, 0.2, 0.1, -0.3, 0.9, -0.4}};
    EXPECT_EQ(compose_affine(AffineParams::identity(), a), a);
    EXPECT_EQ(compose_affine(a, AffineParams::identity()), a);
}

TEST(ComposeAffine, ScalesMultiply) {
    EXPECT_EQ(compose_affine(AffineParams::scaling(0.5), AffineParams::scaling(0.5)), AffineParams::scaling(0.25));
}

TEST(ComposeAffine, MatchesMatrixProductOracle) {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        AffineParams p, q;
        for (double& v : p.a) v = rng.uniform(-2, 2);
        for (double& v : q.a) v = rng.uniform(-2, 2);
        const AffineParams got = compose_affine(p, q), want = matmul_oracle(p, q);
        for (int k = 0; k < 6; ++k) EXPECT_NEAR(got.a[k], want.a[k], 1e-12);
    }
}

TEST(ComposeAffine, IntegerTranslationsComposeExactlyOnValidRegion) {
    const int h = 10, w = 13;
    auto img = oracle::random_tensor<float>({3, h, w}, 41, 0.0, 1.0);
    auto shift = [&](int dx, int dy) { return AffineParams::translation(2.0 * dx / (w - 1), 2.0 * dy / (h - 1)); };
    for (auto [d1, d2] : {std::pair{std::pair{2, 1}, std::pair{3, 0}}, {{-1, 2}, {4, -3}}, {{0, 0}, {-2, -2}}}) {
        const AffineParams a1 = shift(d1.first, d1.second), a2 = shift(d2.first, d2.second);
        Tape<float> tape;
        auto twice = grid_sample(tape, grid_sample(tape, img, affine_grid<float>(a1, h, w)), affine_grid<float>(a2, h, w));
        auto once = grid_sample(tape, img, affine_grid<float>(compose_affine(a1, a2), h, w));
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    const int mx = x + d2.first, my = y + d2.second;
                    if (mx < 0 || mx >= w || my < 0 || my >= h) continue;
                    const std::size_t i = (c * h + y) * w + x;
                    ASSERT_EQ(twice[i], once[i]) << x << "," << y;
                }
            }
        }
    }
}

TEST(ComposeAffine, MildAffinesOnSmoothImagesAgree) {
    const int n = 64;
    const Tensor<double> img = oracle::smooth_image(n, n, 2.0, 77).to_tensor<double>();
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const AffineParams a1 = rotation_scale(rng.uniform(-15, 15), rng.uniform(0.8, 1.2));
        const AffineParams a2 = rotation_scale(rng.uniform(-15, 15), rng.uniform(0.8, 1.2));
        Tape<double> tape;
        const auto g2 = affine_grid<double>(a2, n, n);
        auto twice = grid_sample(tape, grid_sample(tape, img, affine_grid<double>(a1, n, n)), g2);
        auto once = grid_sample(tape, img, affine_grid<double>(compose_affine(a1, a2), n, n));
        double err = 0;
        std::size_t count = 0;
        const std::size_t plane = static_cast<std::size_t>(n) * n;
        for (std::size_t i = 0; i < plane; ++i) {
            if (std::abs(g2.coords[i]) > 1 || std::abs(g2.coords[plane + i]) > 1) continue;
            for (int c = 0; c < 3; ++c) err += std::abs(twice[c * plane + i] - once[c * plane + i]);
            count += 3;
        }
        ASSERT_GT(count, plane);
        EXPECT_LE(err / count, 0.02) << "trial " << trial;
    }
}

// --- center_crop --------------------------------------------------------------

TEST(CenterCrop, FullSizeIsIdentity) {
    Tape<double> tape;
    auto x = oracle::random_tensor<double>({2, 5, 4}, 1);
    auto y = center_crop(tape, x, 5, 4);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(CenterCrop, OneFromThreeIsCentre) {
    Tape<double> tape;
    Tensor<double> x({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    EXPECT_EQ(center_crop(tape, x, 1, 1)[0], 5.0);
}

TEST(CenterCrop, TwoFromFourUsesRowsAndColsOneTwo) {
    Tape<double> tape;
    auto x = oracle::random_tensor<double>({1, 4, 4}, 2);
    auto y = center_crop(tape, x, 2, 2);
    EXPECT_EQ(y[0], x[5]);
    EXPECT_EQ(y[1], x[6]);
    EXPECT_EQ(y[2], x[9]);
    EXPECT_EQ(y[3], x[10]);
}

TEST(CenterCrop, OversizeThrows) {
    Tape<double> tape;
    EXPECT_THROW(center_crop(tape, Tensor<double>({1, 3, 3}), 4, 2), DimensionError);
}

TEST(CenterCrop, GradientScattersIntoWindow) {
    Tape<double> tape;
    Tensor<double> x({1, 4, 4}, 1.0);
    x.set_requires_grad(true);
    tape.backward(sum(tape, center_crop(tape, x, 2, 2)));
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            EXPECT_EQ(x.grad()[r * 4 + c], (r >= 1 && r <= 2 && c >= 1 && c <= 2) ? 1.0 : 0.0);
}

// --- homography -------------------------------------------------------------

TEST(Homography, NormalizesAndRejectsDegenerate) {
    Homography h({2, 0, 0, 0, 2, 0, 0, 0, 2});
    EXPECT_EQ(h.matrix(), (std::array<double, 9>{1, 0, 0, 0, 1, 0, 0, 0, 1}));
    EXPECT_THROW(Homography({1, 2, 0, 2, 4, 0, 0, 0, 1}), DegenerateTransformError);
    EXPECT_THROW(Homography({1, 0, 0, 0, 1, 0, 0, 0, 0}), DegenerateTransformError);
}

TEST(Homography, InverseAndCorrespondences) {
    const std::array<Point2, 4> src{{{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}};
    const std::array<Point2, 4> dst{{{-0.6, -0.5}, {0.7, -0.55}, {0.5, 0.6}, {-0.4, 0.45}}};
    const Homography h = Homography::from_correspondences(src, dst);
    for (int i = 0; i < 4; ++i) {
        const Point2 p = h.apply(src[i]);
        EXPECT_NEAR(p.x, dst[i].x, 1e-12);
        EXPECT_NEAR(p.y, dst[i].y, 1e-12);
        const Point2 q = h.inverse().apply(dst[i]);
        EXPECT_NEAR(q.x, src[i].x, 1e-12);
        EXPECT_NEAR(q.y, src[i].y, 1e-12);
    }
    const Homography id = h * h.inverse();
    for (int k = 0; k < 9; ++k) EXPECT_NEAR(id.matrix()[k], Homography::identity().matrix()[k], 1e-12);
}

TEST(Homography, ApplyNearLineAtInfinityThrows) {
    const Homography h({1, 0, 0, 0, 1, 0, 1, 0, 1});
    EXPECT_THROW(h.apply({-1.0, 0.0}), DegenerateTransformError);
}

// --- warp_homography ----------------------------------------------------------

TEST(WarpHomography, IdentityKeepsImageAndFullMask) {
    const ImageRGB img = oracle::smooth_image(20, 30, 1.5, 8);
    auto [out, mask] = warp_homography(img, Homography::identity(), 20, 30);
    EXPECT_EQ(out, img);
    for (float m : mask.values) EXPECT_EQ(m, 1.0f);
}

TEST(WarpHomography, AffineAgreesWithDifferentiablePath) {
    const ImageRGB img = oracle::smooth_image(40, 48, 2.0, 9);
    const Tensor<double> src = img.to_tensor<double>();
    for (const AffineParams& a : {rotation_scale(12, 0.85, 0.1, -0.05), rotation_scale(-7, 1.15, -0.2, 0.3),
                                  AffineParams{{0.6, 0.1, 0.0, -0.05, 0.7, 0.1}}}) {
        auto [warped, mask] = warp_homography(img, Homography::from_affine(a), 36, 44);
        Tape<double> tape;
        auto ref = grid_sample(tape, src, affine_grid<double>(a, 36, 44));
        const auto got = warped.data();
        for (std::size_t i = 0; i < ref.numel(); ++i) ASSERT_NEAR(got[i], ref[i], 1e-6) << i;
    }
}

TEST(WarpHomography, QuarterTurnPermutesIndices) {
    const int n = 3;
    std::vector<float> chw(3 * n * n);
    for (std::size_t i = 0; i < chw.size(); ++i) chw[i] = static_cast<float>(i) / chw.size();
    const ImageRGB img(n, n, chw);
    // Output (u,v) reads source (-v,u): out[y][x] = src[x][n-1-y].
    auto [out, mask] = warp_homography(img, Homography({0, -1, 0, 1, 0, 0, 0, 0, 1}), n, n);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < n; ++y)
            for (int x = 0; x < n; ++x) EXPECT_EQ(out.at(c, y, x), img.at(c, x, n - 1 - y));
    for (float m : mask.values) EXPECT_EQ(m, 1.0f);
}

TEST(WarpHomography, MaskIsZeroOutsideAndFractionalAtEdge) {
    const ImageRGB img = oracle::smooth_image(8, 8, 1.0, 10);
    auto [out, mask] = warp_homography(img, Homography::from_affine(AffineParams::scaling(1.5)), 8, 8);
    EXPECT_EQ(mask.at(0, 0), 0.0f);
    EXPECT_EQ(mask.at(4, 4), 1.0f);
    bool fractional = false;
    for (float m : mask.values) fractional |= (m > 0.0f && m < 1.0f);
    EXPECT_TRUE(fractional);
}

TEST(ResizeBilinear, SameSizeIsIdentity) {
    const ImageRGB img = oracle::smooth_image(9, 11, 1.0, 12);
    EXPECT_EQ(resize_bilinear(img, 9, 11), img);
    const ImageRGB big = resize_bilinear(img, 17, 21);
    EXPECT_EQ(big.height(), 17);
    EXPECT_EQ(big.width(), 21);
    EXPECT_EQ(big.at(1, 0, 0), img.at(1, 0, 0));
    EXPECT_EQ(big.at(2, 16, 20), img.at(2, 8, 10));
}

}  // namespace
}  // namespace dce
