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

#include "dce/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "dce/parallel.hpp"
#include "dce/warp.hpp"

namespace dce {

namespace {

void require_same(const ImageRGB& a, const ImageRGB& b, const char* what) {
    if (a.height() != b.height() || a.width() != b.width()) {
        throw DimensionError(std::string(what) + ": size mismatch " + std::to_string(a.height()) + "x" +
                             std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                             std::to_string(b.width()));
    }
}

constexpr int kWindow = 11;

std::array<double, kWindow> gaussian_window() {
    std::array<double, kWindow> w{};
    double s = 0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - kWindow / 2;
        s += w[i] = std::exp(-d * d / (2 * 1.5 * 1.5));
    }
    for (double& v : w) v /= s;
    return w;
}

// Valid-window separable Gaussian filter of one plane.
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w) {
    static const auto g = gaussian_window();
    const int oh = h - kWindow + 1, ow = w - kWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(h) * ow), out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int k = 0; k < kWindow; ++k) s += g[k] * in[static_cast<std::size_t>(y) * w + x + k];
            rows[static_cast<std::size_t>(y) * ow + x] = s;
        }
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int k = 0; k < kWindow; ++k) s += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
            out[static_cast<std::size_t>(y) * ow + x] = s;
        }
    return out;
}

}  // namespace

double mse_metric(const ImageRGB& a, const ImageRGB& b) {
    require_same(a, b, "mse");
    const auto x = a.data(), y = b.data();
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - y[i];
        s += d * d;
    }
    return s / static_cast<double>(x.size());
}

double psnr(const ImageRGB& a, const ImageRGB& b) {
    return 10.0 * std::log10(1.0 / std::max(mse_metric(a, b), 1e-10));
}

double ssim(const ImageRGB& a, const ImageRGB& b) {
    require_same(a, b, "ssim");
    const int h = a.height(), w = a.width();
    if (h < kWindow || w < kWindow) {
        throw DimensionError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) +
                             " is smaller than the 11x11 window");
    }
    constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0), c2 = (0.03 * 1.0) * (0.03 * 1.0);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    double total = 0;
    for (int c = 0; c < 3; ++c) {
        std::vector<double> x(plane), y(plane), xx(plane), yy(plane), xy(plane);
        for (std::size_t i = 0; i < plane; ++i) {
            x[i] = a.data()[c * plane + i];
            y[i] = b.data()[c * plane + i];
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, h, w), my = filter_valid(y, h, w);
        const auto sxx = filter_valid(xx, h, w), syy = filter_valid(yy, h, w), sxy = filter_valid(xy, h, w);
        double acc = 0;
        for (std::size_t i = 0; i < mx.size(); ++i) {
            const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i], cv = sxy[i] - mx[i] * my[i];
            acc += ((2 * mx[i] * my[i] + c1) * (2 * cv + c2)) /
                   ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
        }
        total += acc / static_cast<double>(mx.size());
    }
    return total / 3.0;
}

MetricReport MetricReport::from_samples(int resolution, std::vector<SampleMetrics> samples) {
    MetricReport r;
    r.resolution = resolution;
    r.samples = std::move(samples);
    for (const auto& s : r.samples) {
        r.mean_psnr += s.psnr_db;
        r.mean_ssim += s.ssim;
        r.mean_mse += s.mse;
    }
    if (!r.samples.empty()) {
        const double n = static_cast<double>(r.samples.size());
        r.mean_psnr /= n;
        r.mean_ssim /= n;
        r.mean_mse /= n;
    }
    return r;
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json j;
    j["resolution"] = resolution;
    j["mean"] = {{"psnr_db", mean_psnr}, {"ssim", mean_ssim}, {"mse", mean_mse}};
    j["samples"] = nlohmann::json::array();
    for (const auto& s : samples) {
        j["samples"].push_back({{"id", s.id}, {"psnr_db", s.psnr_db}, {"ssim", s.ssim}, {"mse", s.mse}});
    }
    return j;
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
    MetricReport r;
    r.resolution = j.at("resolution").get<int>();
    for (const auto& s : j.at("samples")) {
        r.samples.push_back({s.at("id").get<std::string>(), s.at("psnr_db").get<double>(),
                             s.at("ssim").get<double>(), s.at("mse").get<double>()});
    }
    r.mean_psnr = j.at("mean").at("psnr_db").get<double>();
    r.mean_ssim = j.at("mean").at("ssim").get<double>();
    r.mean_mse = j.at("mean").at("mse").get<double>();
    return r;
}

SampleMetrics measure(const std::string& id, const ImageRGB& prediction, const ImageRGB& reference) {
    return {id, psnr(prediction, reference), ssim(prediction, reference), mse_metric(prediction, reference)};
}

ImageRGB match_resolution(const ImageRGB& prediction, int size) {
    const int h = prediction.height(), w = prediction.width();
    if (h == size && w == size) return prediction;
    if (h == w && h > size && h % size == 0) return downsample_box(prediction, h / size);
    return resize_bilinear(prediction, size, size);
}

MetricReport evaluate_dataset(const Manifest& manifest, int resolution, const Predictor& predict) {
    const std::size_t n = manifest.records.size();
    std::vector<SampleMetrics> samples(n);
    std::vector<std::string> errors(n);
    parallel_for(n, [&](std::size_t i) {
        const SampleRecord& r = manifest.records[i];
        try {
            const ImageRGB gt = read_png(manifest.resolve(r.gt_path));
            ImageRGB reference;
            if (resolution == gt.height()) {
                reference = gt;
            } else {
                if (r.gt_hr_path.empty()) throw EvaluationError("no high-resolution ground truth");
                reference = read_png(manifest.resolve(r.gt_hr_path));
                if (resolution != reference.height()) {
                    throw EvaluationError("resolution " + std::to_string(resolution) + " matches neither gt (" +
                                          std::to_string(gt.height()) + ") nor gt_hr (" +
                                          std::to_string(reference.height()) + ")");
                }
            }
            samples[i] = measure(r.id, match_resolution(predict(r), resolution), reference);
        } catch (const std::exception& e) {
            errors[i] = r.id + ": " + e.what();
        }
    });
    std::string failed;
    for (const auto& e : errors) {
        if (!e.empty()) failed += "\n  " + e;
    }
    if (!failed.empty()) throw EvaluationError("evaluation failed for:" + failed);
    return MetricReport::from_samples(resolution, std::move(samples));
}

double corner_error_px(const AffineParams& crop, const Homography& embed, int size) {
    const double half = (size - 1) / 2.0;  // normalized unit -> pixels (align corners)
    double total = 0.0;
    for (const Point2& c : kUnitCorners) {
        const Point2 p = crop.apply(c);
        const Point2 q = embed.apply(c);
        total += std::hypot(p.x - q.x, p.y - q.y) * half;
    }
    return total / 4.0;
}

std::string render_table(const std::vector<std::pair<std::string, MetricReport>>& columns) {
    std::size_t width = 10;
    for (const auto& [name, _] : columns) width = std::max(width, name.size() + 2);
    std::ostringstream os;
    os << std::left << std::setw(8) << "metric";
    for (const auto& [name, _] : columns) os << std::right << std::setw(static_cast<int>(width)) << name;
    os << '\n';
    auto row = [&](const char* label, int precision, auto get) {
        os << std::left << std::setw(8) << label << std::fixed << std::setprecision(precision);
        for (const auto& [_, r] : columns) os << std::right << std::setw(static_cast<int>(width)) << get(r);
        os << '\n';
    };
    row("PSNR", 2, [](const MetricReport& r) { return r.mean_psnr; });
    row("SSIM", 4, [](const MetricReport& r) { return r.mean_ssim; });
    row("MSE", 4, [](const MetricReport& r) { return r.mean_mse; });
    return os.str();
}

}  // namespace dce
