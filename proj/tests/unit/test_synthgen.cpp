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
#include <fstream>
#include <iterator>

#include "dce/synthgen.hpp"
#include "../support/oracles.hpp"

namespace dce {
namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / "dce_test_synthgen" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Small procedural corpus shared by the dataset tests.
struct Corpus {
    fs::path fg, bg;
};
const Corpus& corpus() {
    static const Corpus c = [] {
        Corpus out{fresh_dir("fg"), fresh_dir("bg")};
        write_procedural_set(out.fg, ProceduralKind::kForeground, 3, 80, 1);
        write_procedural_set(out.bg, ProceduralKind::kBackground, 3, 80, 2);
        return out;
    }();
    return c;
}

TEST(SampleTransform, DegenerateBoundsGiveIdentity) {
    TransformBounds b{1.0, 1.0, 0.0, 0.0};
    const EmbedTransform t = sample_transform(42, b);
    EXPECT_EQ(t.homography.matrix(), Homography::identity().matrix());
    EXPECT_EQ(t.scale, 1.0);
}

TEST(SampleTransform, ThousandSeedsStayInsideAndInRange) {
    const TransformBounds b;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const EmbedTransform t = sample_transform(seed, b);
        ASSERT_GE(t.scale, 0.5);
        ASSERT_LE(t.scale, 0.8);
        ASSERT_GT(std::abs(t.homography.determinant()), 1e-9);
        ASSERT_LE(std::abs(t.rotation_deg), 25.0);
        for (int k = 0; k < 4; ++k) {
            const Point2 p = t.homography.apply(kUnitCorners[k]);
            ASSERT_NEAR(p.x, t.corners[k].x, 1e-9) << seed;
            ASSERT_NEAR(p.y, t.corners[k].y, 1e-9) << seed;
            ASSERT_LE(std::abs(t.corners[k].x), 1.0) << seed;
            ASSERT_LE(std::abs(t.corners[k].y), 1.0) << seed;
        }
    }
}

TEST(SampleTransform, SameSeedIsBitIdentical) {
    const TransformBounds b;
    EXPECT_EQ(sample_transform(9, b).homography.matrix(), sample_transform(9, b).homography.matrix());
    EXPECT_NE(sample_transform(9, b).homography.matrix(), sample_transform(10, b).homography.matrix());
}

TEST(SampleTransform, TranslateCapLimitsCentreOffset) {
    TransformBounds b{0.6, 0.9, 0.0, 0.0, 0.2};
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const EmbedTransform t = sample_transform(seed, b);
        const Point2 c = t.homography.apply({0, 0});
        EXPECT_LE(std::abs(c.x), 0.4 + 1e-12);
        EXPECT_LE(std::abs(c.y), 0.4 + 1e-12);
    }
}

TEST(SampleTransform, InfeasibleAndInvalidBounds) {
    EXPECT_THROW(sample_transform(1, TransformBounds{1.0, 1.0, 20.0, 0.0}), BoundsInfeasibleError);
    EXPECT_THROW(sample_transform(1, TransformBounds{0.0, 0.5}), std::invalid_argument);
    EXPECT_THROW(sample_transform(1, TransformBounds{0.7, 0.5}), std::invalid_argument);
    EXPECT_THROW(sample_transform(1, TransformBounds{0.5, 0.8, 25, 0.3}), std::invalid_argument);
}

TEST(Composite, IdentityGivesForeground) {
    const ImageRGB fg = oracle::smooth_image(32, 32, 1.5, 1), bg = oracle::smooth_image(32, 32, 1.5, 2);
    EXPECT_EQ(composite(fg, bg, Homography::identity()), fg);
}

TEST(Composite, HalfScaleLeavesCornersToBackground) {
    const ImageRGB fg = oracle::smooth_image(32, 32, 1.5, 3), bg = oracle::smooth_image(32, 32, 1.5, 4);
    const ImageRGB photo = composite(fg, bg, Homography::from_affine(AffineParams::scaling(0.5)));
    for (int c = 0; c < 3; ++c) {
        for (auto [y, x] : {std::pair{0, 0}, {0, 31}, {31, 0}, {31, 31}}) EXPECT_EQ(photo.at(c, y, x), bg.at(c, y, x));
    }
}

TEST(Composite, MaskIsUnitInsideQuadAndBoundedEverywhere) {
    const ImageRGB fg = oracle::smooth_image(40, 40, 1.5, 5);
    const TransformBounds b;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const EmbedTransform t = sample_transform(seed, b);
        const auto [warped, mask] = warp_homography(fg, t.homography.inverse(), 40, 40);
        for (int y = 0; y < 40; ++y) {
            for (int x = 0; x < 40; ++x) {
                const float m = mask.at(y, x);
                ASSERT_GE(m, 0.0f);
                ASSERT_LE(m, 1.0f);
                const Point2 src = t.homography.inverse().apply({to_normalized(x, 40), to_normalized(y, 40)});
                // One source pixel inside the border guarantees all four taps are in range.
                const double margin = 2.0 / 39.0;
                if (std::abs(src.x) < 1 - margin && std::abs(src.y) < 1 - margin) ASSERT_EQ(m, 1.0f);
            }
        }
    }
}

TEST(Manifest, RoundTripKeepsNullHomography) {
    const fs::path d = fresh_dir("manifest");
    Manifest m;
    m.records.push_back({"00000", "a.png", "b.png", "c.png", Homography::from_affine(AffineParams::scaling(0.6)), 0.6,
                         12345678901234567ull});
    m.records.push_back({"00001", "p.png", "g.png", "", std::nullopt, std::nullopt, 0});
    save_manifest(d / "m.jsonl", m);
    const Manifest back = load_manifest(d / "m.jsonl");
    ASSERT_EQ(back.records.size(), 2u);
    EXPECT_EQ(back.root, d);
    EXPECT_EQ(back.records[0].homography->matrix(), m.records[0].homography->matrix());
    EXPECT_EQ(back.records[0].seed, 12345678901234567ull);
    EXPECT_EQ(*back.records[0].fg_scale, 0.6);
    EXPECT_FALSE(back.records[1].homography.has_value());
    save_manifest(d / "m2.jsonl", back);
    EXPECT_EQ(slurp(d / "m.jsonl"), slurp(d / "m2.jsonl"));
}

TEST(Manifest, BadLineNamesLineNumber) {
    const fs::path d = fresh_dir("badmanifest");
    std::ofstream(d / "m.jsonl") << R"({"id":"0","photo_path":"a","gt_path":"b"})" << "\n{broken\n";
    try {
        load_manifest(d / "m.jsonl");
        FAIL();
    } catch (const ManifestError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
    EXPECT_THROW(load_manifest(d / "missing.jsonl"), ManifestError);
}

TEST(GenerateDataset, DeterministicFilesAndLineCount) {
    const fs::path a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
    GenerateOptions opt;
    opt.n = 3;
    opt.seed = 7;
    opt.size = 48;
    const Manifest ma = generate_dataset(opt, corpus().fg, corpus().bg, a);
    generate_dataset(opt, corpus().fg, corpus().bg, b);
    ASSERT_EQ(ma.records.size(), 3u);
    EXPECT_EQ(ma.records[2].id, "00002");
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        ++files;
        EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path();
    }
    EXPECT_EQ(files, 3u * 3 + 1);
    const Manifest loaded = load_manifest(a / "manifest.jsonl");
    EXPECT_EQ(loaded.records.size(), 3u);
    const ImageRGB photo = read_png(loaded.resolve(loaded.records[0].photo_path));
    const ImageRGB hr = read_png(loaded.resolve(loaded.records[0].gt_hr_path));
    EXPECT_EQ(photo.height(), 48);
    EXPECT_EQ(hr.width(), 96);
}

TEST(GenerateDataset, GroundTruthIgnoresBackgroundAndTransform) {
    const fs::path other_bg = fresh_dir("other_bg");
    write_procedural_set(other_bg, ProceduralKind::kBackground, 3, 80, 99);
    const fs::path a = fresh_dir("gt_a"), b = fresh_dir("gt_b");
    GenerateOptions opt;
    opt.n = 2;
    opt.size = 40;
    generate_dataset(opt, corpus().fg, corpus().bg, a);
    opt.bounds.rot_max_deg = 5;
    generate_dataset(opt, corpus().fg, other_bg, b);
    for (const char* f : {"00000_gt.png", "00001_gt2x.png"}) EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
    EXPECT_NE(slurp(a / "00000_photo.png"), slurp(b / "00000_photo.png"));
}

TEST(GenerateDataset, InverseWarpRecoversGroundTruth) {
    const fs::path d = fresh_dir("recon");
    GenerateOptions opt;
    opt.n = 4;
    opt.seed = 3;
    opt.size = 96;
    const Manifest m = generate_dataset(opt, corpus().fg, corpus().bg, d);
    for (const auto& r : m.records) {
        const ImageRGB photo = read_png(m.resolve(r.photo_path)), gt = read_png(m.resolve(r.gt_path));
        // Output pixel of the gt frame -> photo coordinates is the embedding itself.
        const auto [back, mask] = warp_homography(photo, *r.homography, 96, 96);
        double se = 0;
        std::size_t count = 0;
        for (int y = 0; y < 96; ++y)
            for (int x = 0; x < 96; ++x) {
                if (mask.at(y, x) < 1.0f) continue;
                for (int c = 0; c < 3; ++c) se += std::pow(back.at(c, y, x) - gt.at(c, y, x), 2);
                count += 3;
            }
        ASSERT_GT(count, 0u);
        EXPECT_GT(10 * std::log10(count / se), 25.0) << r.id;
    }
}

TEST(GenerateDataset, SkipsUnreadableAndRejectsEmpty) {
    const fs::path fg = fresh_dir("fg_junk");
    write_procedural_set(fg, ProceduralKind::kForeground, 1, 40, 5);
    std::ofstream(fg / "zz_broken.png") << "garbage";
    GenerateOptions opt;
    opt.n = 2;
    opt.size = 32;
    EXPECT_EQ(generate_dataset(opt, fg, corpus().bg, fresh_dir("junk_out")).records.size(), 2u);
    EXPECT_THROW(generate_dataset(opt, fresh_dir("empty"), corpus().bg, fresh_dir("empty_out")), ImageIOError);
    EXPECT_THROW(generate_dataset(opt, fresh_dir("x") / "missing", corpus().bg, fresh_dir("x_out")), ImageIOError);
}

TEST(Procedural, DeterministicAndDistinct) {
    EXPECT_EQ(procedural_image(ProceduralKind::kForeground, 30, 30, 1), procedural_image(ProceduralKind::kForeground, 30, 30, 1));
    EXPECT_NE(procedural_image(ProceduralKind::kForeground, 30, 30, 1), procedural_image(ProceduralKind::kForeground, 30, 30, 2));
}

}  // namespace
}  // namespace dce
