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
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "dce/image.hpp"
#include "dce/warp.hpp"

// Synthetic photo-of-an-image generator. A foreground image is scaled,
// rotated, perspective-jittered and translated into a background frame;
// the exact embedding is kept as ground truth.

namespace dce {

class BoundsInfeasibleError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

class ManifestError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

struct TransformBounds {
    double scale_min = 0.5;
    double scale_max = 0.8;
    double rot_max_deg = 25.0;
    /// Max corner displacement, as a fraction of the frame dimension.
    double perspective_jitter = 0.05;
    /// Max centre offset as a fraction of the frame dimension; negative
    /// means the whole margin that keeps the quad inside.
    double translate_max = -1.0;

    /// Throws std::invalid_argument.
    void validate() const;
};

/// One draw of the embedding transform.
struct EmbedTransform {
    /// Foreground normalized coordinates -> photo normalized coordinates.
    Homography homography;
    double scale = 1.0;
    double rotation_deg = 0.0;
    /// Foreground corners (-1,-1), (1,-1), (1,1), (-1,1) in the photo.
    std::array<Point2, 4> corners{};
};

inline constexpr std::array<Point2, 4> kUnitCorners{{{-1, -1}, {1, -1}, {1, 1}, {-1, 1}}};

/// Deterministic in (seed, bounds). Throws BoundsInfeasibleError after 100
/// rejected placements.
EmbedTransform sample_transform(std::uint64_t seed, const TransformBounds& bounds);

/// Alpha-over of the warped foreground onto `bg` using the coverage mask.
/// `embed` maps foreground coordinates into the photo; output has bg's size.
ImageRGB composite(const ImageRGB& fg, const ImageRGB& bg, const Homography& embed);

struct SampleRecord {
    std::string id;
    std::string photo_path;  // relative to the manifest directory
    std::string gt_path;
    std::string gt_hr_path;
    std::optional<Homography> homography;  // absent for real photo/gt pairs
    std::optional<double> fg_scale;
    std::uint64_t seed = 0;
};

struct Manifest {
    std::filesystem::path root;  // directory the record paths are relative to
    std::vector<SampleRecord> records;

    std::filesystem::path resolve(const std::string& relative) const { return root / relative; }
};

/// JSON Lines, one record per line.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct GenerateOptions {
    int n = 1;
    std::uint64_t seed = 0;
    TransformBounds bounds;
    /// Photo and ground-truth side; the high-resolution target is twice this.
    int size = 224;
};

/// Writes {id}_photo.png, {id}_gt.png, {id}_gt2x.png and manifest.jsonl to
/// out_dir. Unreadable inputs are skipped with a warning.
Manifest generate_dataset(const GenerateOptions& options, const std::filesystem::path& fg_dir,
                          const std::filesystem::path& bg_dir, const std::filesystem::path& out_dir);

/// Deterministic stand-in artwork for tests and demos: foregrounds are
/// structured (blobs, bars, a frame), backgrounds are smooth gradients with
/// fine texture.
enum class ProceduralKind { kForeground, kBackground };
ImageRGB procedural_image(ProceduralKind kind, int height, int width, std::uint64_t seed);

/// Writes `count` procedural PNGs named {prefix}{index}.png into `dir`.
void write_procedural_set(const std::filesystem::path& dir, ProceduralKind kind, int count,
                          int size, std::uint64_t seed);

}  // namespace dce
