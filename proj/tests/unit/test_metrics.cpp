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
#include <filesystem>

#include "dce/metrics.hpp"
#include "../support/oracles.hpp"

namespace dce {
namespace {

namespace fs = std::filesystem;

ImageRGB constant(int h, int w, float v) { return ImageRGB(h, w, v); }

ImageRGB random_image(int h, int w, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<float> d(static_cast<std::size_t>(3) * h * w);
    for (float& v : d) v = static_cast<float>(rng.uniform());
    return ImageRGB(h, w, std::move(d));
}

TEST(Mse, ClosedForms) {
    const ImageRGB a = random_image(8, 8, 1);
    EXPECT_EQ(mse_metric(a, a), 0.0);
    EXPECT_EQ(mse_metric(constant(4, 4, 0), constant(4, 4, 1)), 1.0);
    EXPECT_NEAR(mse_metric(constant(4, 4, 0.2f), constant(4, 4, 0.3f)), 0.01, 1e-8);
    EXPECT_THROW(mse_metric(constant(4, 4, 0), constant(4, 5, 0)), DimensionError);
}

TEST(Mse, AlwaysInUnitInterval) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const double m = mse_metric(random_image(9, 7, s), random_image(9, 7, s + 100));
        EXPECT_GE(m, 0.0);
        EXPECT_LE(m, 1.0);
    }
}

TEST(Psnr, ClosedForms) {
    const ImageRGB a = random_image(8, 8, 2);
    EXPECT_EQ(psnr(a, a), 100.0);
    // 0.25 and 0.375 are dyadic, so the 0.125 gap is exact in float; check the
    // non-dyadic 0.1 case separately against the rounded pixel values.
    EXPECT_NEAR(psnr(constant(4, 4, 0.25f), constant(4, 4, 0.375f)), 10 * std::log10(64.0), 1e-9);
    const float lo = 0.2f, hi = 0.3f;
    const double d = static_cast<double>(hi) - lo;
    EXPECT_NEAR(psnr(constant(4, 4, lo), constant(4, 4, hi)), 10 * std::log10(1 / (d * d)), 1e-9);
    EXPECT_NEAR(psnr(constant(4, 4, 0.0f), constant(4, 4, 0.1f)), 20.0, 1e-6);
}

TEST(Psnr, MatchesMseAndIsSymmetric) {
    const ImageRGB a = random_image(10, 10, 3), b = random_image(10, 10, 4);
    EXPECT_DOUBLE_EQ(psnr(a, b), 10 * std::log10(1 / mse_metric(a, b)));
    EXPECT_EQ(psnr(a, b), psnr(b, a));
    EXPECT_EQ(mse_metric(a, b), mse_metric(b, a));
}

TEST(Psnr, DecreasesWithNoiseAmplitude) {
    const ImageRGB base = constant(16, 16, 0.5f);
    Rng rng(5);
    std::vector<double> pattern(base.size());
    for (double& v : pattern) v = 2 * rng.uniform() - 1;
    double prev = 1e9;
    for (double amp : {0.001, 0.01, 0.05, 0.1, 0.2, 0.4}) {
        std::vector<float> d(base.size());
        for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<float>(0.5 + amp * pattern[i]);
        const double p = psnr(base, ImageRGB(16, 16, d));
        EXPECT_LT(p, prev) << amp;
        prev = p;
    }
}

TEST(Ssim, IdenticalIsOne) {
    const ImageRGB a = oracle::smooth_image(24, 20, 1.5, 6);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-6);
}

TEST(Ssim, BrightnessShiftLowersScore) {
    const ImageRGB a = oracle::smooth_image(20, 20, 1.5, 7);
    std::vector<float> d(a.data().begin(), a.data().end());
    for (float& v : d) v = v * 0.5f + 0.5f;
    EXPECT_LT(ssim(a, ImageRGB(20, 20, d)), 1.0);
}

TEST(Ssim, MatchesDirectFormulaOnFixedPairs) {
    for (std::uint64_t s = 0; s < 4; ++s) {
        const ImageRGB a = random_image(16, 16, 10 + s);
        const ImageRGB b = oracle::smooth_image(16, 16, 1.0, 20 + s);
        EXPECT_NEAR(ssim(a, b), oracle::ssim(a, b), 1e-6);
        const ImageRGB c = oracle::smooth_image(16, 16, 2.0, 30 + s);
        EXPECT_NEAR(ssim(b, c), oracle::ssim(b, c), 1e-6);
    }
}

TEST(Ssim, SymmetricAndBounded) {
    const ImageRGB a = random_image(18, 15, 40), b = random_image(18, 15, 41);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-9);
    EXPECT_GE(ssim(a, b), -1.0);
    EXPECT_LE(ssim(a, b), 1.0);
}

TEST(Ssim, TooSmallThrows) { EXPECT_THROW(ssim(constant(10, 20, 0), constant(10, 20, 0)), DimensionError); }

TEST(MatchResolution, PoolsExactMultiplesAndResizesOtherwise) {
    std::vector<float> d(3 * 4, 0.f);
    d[0] = 1.0f;  // top-left pixel of channel 0
    const ImageRGB img(2, 2, d);
    const ImageRGB pooled = match_resolution(img, 1);
    EXPECT_FLOAT_EQ(pooled.at(0, 0, 0), 0.25f);
    EXPECT_EQ(match_resolution(img, 2), img);
    EXPECT_EQ(match_resolution(img, 3).height(), 3);
}

TEST(Report, MeansAndJsonRoundTrip) {
    const MetricReport r = MetricReport::from_samples(224, {{"a", 20, 0.5, 0.01}, {"b", 30, 0.7, 0.001}});
    EXPECT_DOUBLE_EQ(r.mean_psnr, 25);
    EXPECT_DOUBLE_EQ(r.mean_ssim, 0.6);
    EXPECT_DOUBLE_EQ(r.mean_mse, 0.0055);
    const MetricReport back = MetricReport::from_json(nlohmann::json::parse(r.to_json().dump()));
    EXPECT_EQ(back.to_json(), r.to_json());
    const std::string table = render_table({{"C", r}, {"C + E", r}});
    EXPECT_NE(table.find("PSNR"), std::string::npos);
    EXPECT_NE(table.find("C + E"), std::string::npos);
    EXPECT_NE(table.find("25.00"), std::string::npos);
}

TEST(CornerError, PixelDistanceOfCorners) {
    // Identity crop vs a foreground embedded at half scale: every corner is
    // off by half the normalized extent on both axes.
    const Homography half = Homography::from_affine(AffineParams::scaling(0.5));
    EXPECT_NEAR(corner_error_px(AffineParams::identity(), half, 97), std::hypot(24.0, 24.0), 1e-9);
    EXPECT_NEAR(corner_error_px(AffineParams::scaling(0.5), half, 97), 0.0, 1e-12);
    // Pure x shift of 0.1 normalized on a 21 px frame is 1 px.
    EXPECT_NEAR(corner_error_px(AffineParams::translation(0.1, 0), Homography::identity(), 21), 1.0, 1e-12);
}

class EvaluateDataset : public ::testing::Test {
 protected:
    static void SetUpTestSuite() {
        dir_ = fs::temp_directory_path() / "dce_test_metrics";
        fs::remove_all(dir_);
        write_procedural_set(dir_ / "fg", ProceduralKind::kForeground, 2, 64, 1);
        write_procedural_set(dir_ / "bg", ProceduralKind::kBackground, 2, 64, 2);
        GenerateOptions opt;
        opt.n = 3;
        opt.size = 32;
        manifest_ = generate_dataset(opt, dir_ / "fg", dir_ / "bg", dir_ / "data");
    }
    static inline fs::path dir_;
    static inline Manifest manifest_;
};

TEST_F(EvaluateDataset, GroundTruthAgainstItselfIsPerfect) {
    for (auto [res, hr] : {std::pair{32, false}, {64, true}}) {
        const MetricReport r = evaluate_dataset(manifest_, res, [&, hr = hr](const SampleRecord& rec) {
            return read_png(manifest_.resolve(hr ? rec.gt_hr_path : rec.gt_path));
        });
        ASSERT_EQ(r.samples.size(), 3u);
        for (const auto& s : r.samples) {
            EXPECT_EQ(s.psnr_db, 100.0);
            EXPECT_NEAR(s.ssim, 1.0, 1e-6);
            EXPECT_EQ(s.mse, 0.0);
        }
    }
}

TEST_F(EvaluateDataset, HighResolutionPredictionIsPooledAtBaseResolution) {
    const MetricReport r = evaluate_dataset(
        manifest_, 32, [&](const SampleRecord& rec) { return read_png(manifest_.resolve(rec.gt_hr_path)); });
    double mean = 0;
    for (const auto& s : r.samples) mean += s.psnr_db / 3;
    EXPECT_DOUBLE_EQ(r.mean_psnr, mean);
    EXPECT_GT(r.mean_psnr, 45.0);
    EXPECT_LT(r.mean_psnr, 100.0);
}

TEST_F(EvaluateDataset, FailuresListEveryId) {
    try {
        evaluate_dataset(manifest_, 32, [](const SampleRecord& rec) -> ImageRGB {
            if (rec.id != "00001") throw ImageIOError("missing prediction");
            return ImageRGB(32, 32);
        });
        FAIL();
    } catch (const EvaluationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("00000"), std::string::npos);
        EXPECT_NE(msg.find("00002"), std::string::npos);
        EXPECT_EQ(msg.find("00001"), std::string::npos);
    }
    EXPECT_THROW(evaluate_dataset(manifest_, 50, [](const SampleRecord&) { return ImageRGB(50, 50); }),
                 EvaluationError);
}

}  // namespace
}  // namespace dce
