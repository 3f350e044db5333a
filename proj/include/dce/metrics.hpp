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

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dce/image.hpp"
#include "dce/synthgen.hpp"

namespace dce {

class EvaluationError : public std::runtime_error {
 public:
    using std::runtime_error::runtime_error;
};

/// Mean of (a-b)^2 over pixels and channels. Throws DimensionError on a size mismatch.
double mse_metric(const ImageRGB& a, const ImageRGB& b);
/// 10 log10(1 / max(mse, 1e-10)); peak 1.
double psnr(const ImageRGB& a, const ImageRGB& b);
/// Single-scale SSIM, 11x11 Gaussian window (sigma 1.5), K1 0.01, K2 0.03,
/// L 1, valid windows only, averaged over windows then channels.
double ssim(const ImageRGB& a, const ImageRGB& b);

struct SampleMetrics {
    std::string id;
    double psnr_db = 0.0;
    double ssim = 0.0;
    double mse = 0.0;
};

struct MetricReport {
    int resolution = 0;
    std::vector<SampleMetrics> samples;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    double mean_mse = 0.0;

    static MetricReport from_samples(int resolution, std::vector<SampleMetrics> samples);
    nlohmann::json to_json() const;
    static MetricReport from_json(const nlohmann::json& j);
};

SampleMetrics measure(const std::string& id, const ImageRGB& prediction, const ImageRGB& reference);

/// Brings a prediction to `size` x `size`: exact integer downscales use an
/// average pool, anything else bilinear resampling.
ImageRGB match_resolution(const ImageRGB& prediction, int size);

/// Produces the prediction for one record at whatever resolution it has.
using Predictor = std::function<ImageRGB(const SampleRecord&)>;

/// Scores every record against gt (resolution == gt size) or gt_hr
/// (resolution == gt_hr size). Failed records are collected and reported
/// together in one EvaluationError.
MetricReport evaluate_dataset(const Manifest& manifest, int resolution, const Predictor& predict);

/// Mean pixel distance between the photo-space corners of a predicted crop
/// (`crop` maps crop coordinates to photo coordinates) and the embedded
/// foreground corners, on a size x size photo.
double corner_error_px(const AffineParams& crop, const Homography& embed, int size);

/// Rows PSNR / SSIM / MSE, one column per named report.
std::string render_table(const std::vector<std::pair<std::string, MetricReport>>& columns);

}  // namespace dce
