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

#include "dce/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "dce/parallel.hpp"
#include "dce/rng.hpp"

namespace dce {

namespace fs = std::filesystem;

void TransformBounds::validate() const {
    auto fail = [](const std::string& m) { throw std::invalid_argument("transform bounds: " + m); };
    if (!(scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0)) {
        fail("need 0 < scale_min <= scale_max <= 1");
    }
    if (!(rot_max_deg >= 0.0 && rot_max_deg < 90.0)) fail("rot_max_deg must be in [0, 90)");
    if (!(perspective_jitter >= 0.0 && perspective_jitter <= 0.2)) fail("perspective_jitter must be in [0, 0.2]");
    if (std::isnan(translate_max)) fail("translate_max is NaN");
}

EmbedTransform sample_transform(std::uint64_t seed, const TransformBounds& bounds) {
    bounds.validate();
    Rng rng(seed);
    for (int attempt = 0; attempt < 100; ++attempt) {
        EmbedTransform t;
        t.scale = bounds.scale_min + (bounds.scale_max - bounds.scale_min) * rng.uniform();
        t.rotation_deg = bounds.rot_max_deg * (2.0 * rng.uniform() - 1.0);
        const double r = t.rotation_deg * std::numbers::pi / 180.0;
        const double c = t.scale * std::cos(r), s = t.scale * std::sin(r);
        double minx = 1e9, maxx = -1e9, miny = 1e9, maxy = -1e9;
        for (int k = 0; k < 4; ++k) {
            const Point2 u = kUnitCorners[k];
            Point2 p{c * u.x - s * u.y, s * u.x + c * u.y};
            // Jitter is a fraction of the frame, which spans 2 normalized units.
            p.x += 2.0 * bounds.perspective_jitter * (2.0 * rng.uniform() - 1.0);
            p.y += 2.0 * bounds.perspective_jitter * (2.0 * rng.uniform() - 1.0);
            t.corners[k] = p;
            minx = std::min(minx, p.x);
            maxx = std::max(maxx, p.x);
            miny = std::min(miny, p.y);
            maxy = std::max(maxy, p.y);
        }
        double lox = -1.0 - minx, hix = 1.0 - maxx, loy = -1.0 - miny, hiy = 1.0 - maxy;
        if (bounds.translate_max >= 0.0) {
            const double m = 2.0 * bounds.translate_max;
            lox = std::max(lox, -m);
            hix = std::min(hix, m);
            loy = std::max(loy, -m);
            hiy = std::min(hiy, m);
        }
        const double ux = rng.uniform(), uy = rng.uniform();
        if (lox > hix || loy > hiy) continue;
        const double tx = lox + (hix - lox) * ux, ty = loy + (hiy - loy) * uy;
        bool inside = true;
        for (Point2& p : t.corners) {
            p.x += tx;
            p.y += ty;
            inside &= p.x >= -1.0 && p.x <= 1.0 && p.y >= -1.0 && p.y <= 1.0;
        }
        if (!inside) continue;
        if (bounds.perspective_jitter == 0.0) {
            t.homography = Homography::from_affine(AffineParams{{c, -s, tx, s, c, ty}});
        } else {
            t.homography = Homography::from_correspondences(kUnitCorners, t.corners);
        }
        return t;
    }
    throw BoundsInfeasibleError("sample_transform: no placement inside the frame after 100 attempts (seed " +
                                std::to_string(seed) + ")");
}

ImageRGB composite(const ImageRGB& fg, const ImageRGB& bg, const Homography& embed) {
    const auto [warped, mask] = warp_homography(fg, embed.inverse(), bg.height(), bg.width());
    std::vector<float> out(bg.size());
    const std::size_t plane = static_cast<std::size_t>(bg.height()) * bg.width();
    const auto w = warped.data(), b = bg.data();
    for (std::size_t i = 0; i < out.size(); ++i) {
        // warped is already weighted by coverage.
        const float m = mask.values[i % plane];
        out[i] = std::clamp(w[i] + (1.0f - m) * b[i], 0.0f, 1.0f);
    }
    return ImageRGB(bg.height(), bg.width(), std::move(out));
}

// --- manifest -------------------------------------------------------------

namespace {

nlohmann::json record_to_json(const SampleRecord& r) {
    nlohmann::json j;
    j["id"] = r.id;
    j["photo_path"] = r.photo_path;
    j["gt_path"] = r.gt_path;
    j["gt_hr_path"] = r.gt_hr_path;
    j["homography"] = r.homography ? nlohmann::json(r.homography->matrix()) : nlohmann::json(nullptr);
    j["fg_scale"] = r.fg_scale ? nlohmann::json(*r.fg_scale) : nlohmann::json(nullptr);
    j["seed"] = r.seed;
    return j;
}

SampleRecord record_from_json(const nlohmann::json& j) {
    SampleRecord r;
    r.id = j.at("id").get<std::string>();
    r.photo_path = j.at("photo_path").get<std::string>();
    r.gt_path = j.at("gt_path").get<std::string>();
    r.gt_hr_path = j.value("gt_hr_path", std::string());
    if (j.contains("homography") && !j["homography"].is_null()) {
        r.homography = Homography(j["homography"].get<std::array<double, 9>>());
    }
    if (j.contains("fg_scale") && !j["fg_scale"].is_null()) r.fg_scale = j["fg_scale"].get<double>();
    r.seed = j.value("seed", std::uint64_t{0});
    return r;
}

}  // namespace

Manifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError("cannot open manifest " + path.string());
    Manifest m;
    m.root = path.parent_path();
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            m.records.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw ManifestError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return m;
}

void save_manifest(const fs::path& path, const Manifest& manifest) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ManifestError("cannot write manifest " + path.string());
    for (const auto& r : manifest.records) out << record_to_json(r).dump() << '\n';
    if (!out) throw ManifestError("write failed for " + path.string());
}

// --- dataset generation -----------------------------------------------------

namespace {

std::vector<ImageRGB> load_image_dir(const fs::path& dir, const char* what) {
    if (!fs::is_directory(dir)) throw ImageIOError(std::string(what) + " directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".png") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<ImageRGB> images;
    for (const auto& f : files) {
        try {
            images.push_back(read_png(f));
        } catch (const ImageIOError& e) {
            spdlog::warn("skipping unreadable {} image: {}", what, e.what());
        }
    }
    if (images.empty()) throw ImageIOError(std::string("no readable PNG images in ") + what + " directory " + dir.string());
    return images;
}

std::string padded_id(int i, int n) {
    const int width = std::max(5, static_cast<int>(std::to_string(std::max(n - 1, 0)).size()));
    std::string s = std::to_string(i);
    return std::string(width - std::min<int>(width, s.size()), '0') + s;
}

}  // namespace

Manifest generate_dataset(const GenerateOptions& options, const fs::path& fg_dir, const fs::path& bg_dir,
                          const fs::path& out_dir) {
    if (options.n < 1) throw std::invalid_argument("generate_dataset: n must be >= 1");
    if (options.size < 2) throw std::invalid_argument("generate_dataset: size must be >= 2");
    options.bounds.validate();
    const std::vector<ImageRGB> fgs = load_image_dir(fg_dir, "foreground");
    const std::vector<ImageRGB> bgs = load_image_dir(bg_dir, "background");
    fs::create_directories(out_dir);

    Manifest manifest;
    manifest.root = out_dir;
    manifest.records.resize(options.n);
    const Rng root(options.seed);
    const int size = options.size;
    parallel_for(static_cast<std::size_t>(options.n), [&](std::size_t i) {
        const Rng rng = root.split(static_cast<std::uint64_t>(i));
        const ImageRGB& fg = fgs[rng.split("fg").below(fgs.size())];
        const ImageRGB& bg = bgs[rng.split("bg").below(bgs.size())];
        const std::uint64_t seed = rng.split("transform").next_u64();
        const EmbedTransform t = sample_transform(seed, options.bounds);

        const ImageRGB gt_hr = resize_bilinear(fg, 2 * size, 2 * size);
        const ImageRGB gt = downsample_box(gt_hr, 2);
        const ImageRGB photo = composite(gt, resize_bilinear(bg, size, size), t.homography);
        SampleRecord& r = manifest.records[i];
        r.id = padded_id(static_cast<int>(i), options.n);
        r.photo_path = r.id + "_photo.png";
        r.gt_path = r.id + "_gt.png";
        r.gt_hr_path = r.id + "_gt2x.png";
        r.homography = t.homography;
        r.fg_scale = t.scale;
        r.seed = seed;
        write_png(out_dir / r.photo_path, photo);
        write_png(out_dir / r.gt_path, gt);
        write_png(out_dir / r.gt_hr_path, gt_hr);
    });
    save_manifest(out_dir / "manifest.jsonl", manifest);
    return manifest;
}

// --- procedural artwork -----------------------------------------------------

ImageRGB procedural_image(ProceduralKind kind, int height, int width, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> px(static_cast<std::size_t>(3) * height * width);
    const std::size_t plane = static_cast<std::size_t>(height) * width;
    auto color = [&] { return std::array<double, 3>{rng.uniform(), rng.uniform(), rng.uniform()}; };
    auto put = [&](int y, int x, const std::array<double, 3>& c, double a) {
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        for (int k = 0; k < 3; ++k) px[k * plane + i] = (1 - a) * px[k * plane + i] + a * c[k];
    };

    // Linear gradient base.
    const auto c0 = color(), c1 = color();
    const double ang = rng.uniform(0, 2 * std::numbers::pi);
    const double gx = std::cos(ang), gy = std::sin(ang);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double u = 0.5 + 0.5 * (gx * (2.0 * x / width - 1) + gy * (2.0 * y / height - 1)) / std::sqrt(2.0);
            for (int k = 0; k < 3; ++k) px[k * plane + y * width + x] = (1 - u) * c0[k] + u * c1[k];
        }
    }

    if (kind == ProceduralKind::kBackground) {
        // Low-contrast blotches plus pixel noise.
        const double amp = rng.uniform(0.03, 0.08);
        for (int b = 0; b < 6; ++b) {
            const double cx = rng.uniform(0, width), cy = rng.uniform(0, height);
            const double rad = rng.uniform(0.1, 0.4) * width;
            const auto c = color();
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    const double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (rad * rad);
                    put(y, x, c, 0.35 * std::exp(-d2));
                }
        }
        for (double& v : px) v += amp * (2 * rng.uniform() - 1);
    } else {
        // Solid shapes with hard edges, then a thin frame.
        const int shapes = 5 + static_cast<int>(rng.below(5));
        for (int s = 0; s < shapes; ++s) {
            const auto c = color();
            const double cx = rng.uniform(0.1, 0.9) * width, cy = rng.uniform(0.1, 0.9) * height;
            const double rx = rng.uniform(0.06, 0.25) * width, ry = rng.uniform(0.06, 0.25) * height;
            const bool ellipse = rng.below(2) == 0;
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    const double dx = (x - cx) / rx, dy = (y - cy) / ry;
                    const bool in = ellipse ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1 && std::abs(dy) <= 1;
                    if (in) put(y, x, c, 0.9);
                }
        }
        const int bars = 2 + static_cast<int>(rng.below(3));
        for (int b = 0; b < bars; ++b) {
            const auto c = color();
            const bool horizontal = rng.below(2) == 0;
            const int pos = static_cast<int>(rng.below(horizontal ? height : width));
            const int thick = 1 + static_cast<int>(rng.below(std::max(2, width / 32)));
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x) {
                    const int v = horizontal ? y : x;
                    if (v >= pos && v < pos + thick) put(y, x, c, 1.0);
                }
        }
        const auto frame = color();
        const int fw = std::max(1, width / 48);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) {
                if (y < fw || x < fw || y >= height - fw || x >= width - fw) put(y, x, frame, 1.0);
            }
    }
    std::vector<float> out(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) out[i] = static_cast<float>(std::clamp(px[i], 0.0, 1.0));
    return ImageRGB(height, width, std::move(out));
}

void write_procedural_set(const fs::path& dir, ProceduralKind kind, int count, int size, std::uint64_t seed) {
    fs::create_directories(dir);
    const Rng root(seed);
    const char* prefix = kind == ProceduralKind::kForeground ? "fg" : "bg";
    parallel_for(static_cast<std::size_t>(count), [&](std::size_t i) {
        const ImageRGB img = procedural_image(kind, size, size, root.split(static_cast<std::uint64_t>(i)).next_u64());
        std::ostringstream name;
        name << prefix << std::string(4 - std::min<std::size_t>(4, std::to_string(i).size()), '0') << i << ".png";
        write_png(dir / name.str(), img);
    });
}

}  // namespace dce
