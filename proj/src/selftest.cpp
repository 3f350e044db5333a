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

#include "dce/selftest.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "dce/metrics.hpp"
#include "dce/model.hpp"
#include "dce/ops.hpp"
#include "dce/synthgen.hpp"
#include "dce/train.hpp"
#include "dce/warp.hpp"

namespace dce {

namespace {

Tensor<double> random_tensor(Shape dims, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<double> t(std::move(dims));
    for (double& v : t.mutable_data()) v = rng.uniform(-1.0, 1.0);
    return t;
}

AffineParams rotation_scale(double deg, double s, double tx, double ty) {
    const double r = deg * 3.14159265358979323846 / 180.0;
    return {{s * std::cos(r), -s * std::sin(r), tx, s * std::sin(r), s * std::cos(r), ty}};
}

CheckOutcome timed(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
    CheckOutcome out;
    out.name = name;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        std::tie(out.passed, out.detail) = body();
    } catch (const std::exception& e) {
        out.passed = false;
        out.detail = std::string("exception: ") + e.what();
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

std::pair<bool, std::string> verdict(const GradCheckResult& r, double tol) {
    std::ostringstream os;
    os << r.probes << " probes, max rel err " << std::scientific << std::setprecision(2) << r.max_rel_error;
    if (r.skipped > 0) os << ", " << r.skipped << " skipped near kinks";
    if (!r.passed(tol)) os << "; worst: " << r.worst;
    return {r.passed(tol), os.str()};
}

/// Smallest distance of any sample point to a pixel-cell boundary.
double grid_clearance(const SampleGrid<double>& g, int h_src, int w_src) {
    const std::size_t plane = static_cast<std::size_t>(g.height()) * g.width();
    double nearest = 1.0;
    for (std::size_t i = 0; i < plane; ++i) {
        const double px = to_pixel(g.coords[i], w_src), py = to_pixel(g.coords[plane + i], h_src);
        nearest = std::min({nearest, std::abs(px - std::round(px)), std::abs(py - std::round(py))});
    }
    return nearest;
}

}  // namespace

std::vector<CheckOutcome> gradient_checks(const GradCheckOptions& options) {
    const double tol = options.tolerance;
    std::vector<CheckOutcome> out;
    auto add = [&](const std::string& name, const std::function<GradCheckResult()>& run) {
        out.push_back(timed("grad " + name, [&] { return verdict(run(), tol); }));
    };

    const auto x = random_tensor({2, 6, 6}, 41);
    const auto w = random_tensor({3, 2, 3, 3}, 42);
    const auto b = random_tensor({3}, 43);
    add("conv2d valid", [&] {
        return check_gradients({x, w, b}, [&](Tape<double>& t) {
            return random_projection(t, conv2d(t, x, w, b, 1, Padding::kValid), 7);
        }, options);
    });
    add("conv2d same stride 2", [&] {
        return check_gradients({x, w, b}, [&](Tape<double>& t) {
            return random_projection(t, conv2d(t, x, w, b, 2, Padding::kSame), 8);
        }, options);
    });
    add("linear", [&] {
        const auto v = random_tensor({7}, 44), m = random_tensor({5, 7}, 45), c = random_tensor({5}, 46);
        return check_gradients({v, m, c}, [&](Tape<double>& t) { return random_projection(t, linear(t, v, m, c), 9); },
                               options);
    });
    add("relu", [&] {
        const auto v = random_tensor({60}, 47);
        return check_gradients(
            {v}, [&](Tape<double>& t) { return random_projection(t, relu(t, v), 3); }, options,
            [&](std::size_t, std::size_t i) { return std::abs(v[i]) >= 1e-3; });
    });
    add("avgpool2d", [&] {
        const auto v = random_tensor({2, 6, 6}, 48);
        return check_gradients({v}, [&](Tape<double>& t) { return random_projection(t, avgpool2d(t, v, 2), 4); },
                               options);
    });
    add("maxpool2d", [&] {
        const auto v = random_tensor({2, 6, 6}, 49);
        // Skip elements within 1e-3 of another element of their window.
        auto clear = [&](std::size_t, std::size_t i) {
            const int k = 3, hw = 6;
            const int c = static_cast<int>(i) / (hw * hw), y = static_cast<int>(i) / hw % hw, xx = static_cast<int>(i) % hw;
            const int y0 = y / k * k, x0 = xx / k * k;
            for (int dy = 0; dy < k; ++dy)
                for (int dx = 0; dx < k; ++dx) {
                    const std::size_t j = static_cast<std::size_t>((c * hw + y0 + dy) * hw + x0 + dx);
                    if (j != i && std::abs(v[j] - v[i]) < 1e-3) return false;
                }
            return true;
        };
        return check_gradients({v}, [&](Tape<double>& t) { return random_projection(t, maxpool2d(t, v, 3), 5); },
                               options, clear);
    });
    add("pixel_shuffle", [&] {
        const auto v = random_tensor({8, 3, 3}, 50);
        return check_gradients({v}, [&](Tape<double>& t) { return random_projection(t, pixel_shuffle(t, v, 2), 6); },
                               options);
    });
    add("grid_sample wrt image", [&] {
        const auto src = random_tensor({2, 6, 7}, 51);
        const SampleGrid<double> g = affine_grid<double>(rotation_scale(10, 0.9, 0.05, -0.1), 5, 5);
        return check_gradients({src}, [&](Tape<double>& t) { return random_projection(t, grid_sample(t, src, g), 4); },
                               options);
    });
    add("grid_sample wrt affine", [&] {
        const auto src = random_tensor({3, 12, 14}, 52);
        Rng rng(17);
        GradCheckResult worst;
        for (int trial = 0, done = 0; trial < 50 && done < 4; ++trial) {
            const AffineParams a = rotation_scale(rng.uniform(-15, 15), rng.uniform(0.8, 1.2),
                                                  rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2));
            // Finite differences across a bilinear cell edge are not derivatives.
            if (grid_clearance(affine_grid<double>(a, 8, 9), 12, 14) < 1e-3) continue;
            ++done;
            const Tensor<double> theta = a.to_tensor<double>();
            GradCheckOptions o = options;
            o.probes = options.probes / 4;
            o.seed = options.seed + static_cast<std::uint64_t>(trial);
            const GradCheckResult r = check_gradients({theta}, [&](Tape<double>& t) {
                return random_projection(t, grid_sample(t, src, affine_grid(t, theta, 8, 9)), 3);
            }, o);
            worst.probes += r.probes;
            worst.skipped += r.skipped;
            if (r.max_rel_error >= worst.max_rel_error) {
                worst.max_rel_error = r.max_rel_error;
                worst.worst = r.worst;
            }
        }
        return worst;
    });
    add("cosine loss", [&] {
        const auto f = random_tensor({4, 3, 3}, 53), g = random_tensor({4, 3, 3}, 54);
        return check_gradients({f, g}, [&](Tape<double>& t) { return cosine_distance(t, f, g).loss; }, options);
    });
    add("feature MSE loss", [&] {
        const auto f = random_tensor({4, 3, 3}, 55), g = random_tensor({4, 3, 3}, 56);
        return check_gradients({f, g}, [&](Tape<double>& t) { return feature_mse(t, f, g); }, options);
    });
    return out;
}

std::vector<CheckOutcome> invariant_checks() {
    std::vector<CheckOutcome> out;

    out.push_back(timed("identity cropper reproduces 224x224 input", [] {
        ModelConfig c;
        c.enhancer_enabled = false;
        const DCEModel<float> m(c);
        const ImageRGB img = procedural_image(ProceduralKind::kForeground, 224, 224, 1);
        const Tensor<float> photo = img.to_tensor<float>();
        Tape<float> tape;
        const CropStage<float> s = m.cropper_forward(tape, photo, 0);
        const bool exact = std::ranges::equal(s.image.data(), photo.data());
        return std::pair{exact, exact ? std::string("bit-exact") : std::string("pixels differ")};
    }));

    out.push_back(timed("integer translations compose exactly", [] {
        const ImageRGB img = procedural_image(ProceduralKind::kBackground, 16, 16, 2);
        const Tensor<float> src = img.to_tensor<float>();
        const double u = 2.0 / 15.0;  // one pixel in normalized units
        const AffineParams a1 = AffineParams::translation(2 * u, 1 * u), a2 = AffineParams::translation(3 * u, -2 * u);
        Tape<float> t;
        const Tensor<float> twice = grid_sample(t, grid_sample(t, src, affine_grid<float>(a1, 16, 16)),
                                                affine_grid<float>(a2, 16, 16));
        const Tensor<float> once = grid_sample(t, src, affine_grid<float>(compose_affine(a1, a2), 16, 16));
        int bad = 0;
        for (int c = 0; c < 3; ++c)
            for (int y = 2; y < 16; ++y)
                for (int x = 0; x <= 10; ++x) {
                    const std::size_t i = static_cast<std::size_t>((c * 16 + y) * 16 + x);
                    const float want = img.at(c, y - 1, x + 5);
                    if (twice[i] != want || once[i] != want) ++bad;
                }
        return std::pair{bad == 0, std::to_string(bad) + " mismatched pixels"};
    }));

    out.push_back(timed("metric closed forms", [] {
        const double p = psnr(ImageRGB(16, 16, 0.0f), ImageRGB(16, 16, 0.1f));
        const ImageRGB img = procedural_image(ProceduralKind::kForeground, 24, 24, 3);
        const double s = ssim(img, img);
        const bool ok = std::abs(p - 20.0) <= 1e-6 && std::abs(s - 1.0) <= 1e-6;
        std::ostringstream os;
        os << std::setprecision(10) << "psnr " << p << ", ssim " << s;
        return std::pair{ok, os.str()};
    }));

    out.push_back(timed("generator bounds over 200 draws", [] {
        const TransformBounds bounds;
        int bad = 0;
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            const EmbedTransform e = sample_transform(seed, bounds);
            const EmbedTransform again = sample_transform(seed, bounds);
            bool inside = true;
            for (const Point2& q : e.corners) inside = inside && std::abs(q.x) <= 1.0 && std::abs(q.y) <= 1.0;
            const bool ok = inside && e.scale >= 0.5 && e.scale <= 0.8 && std::abs(e.homography.determinant()) > 1e-9 &&
                            again.homography.matrix() == e.homography.matrix();
            if (!ok) ++bad;
        }
        return std::pair{bad == 0, std::to_string(bad) + " bad draws"};
    }));

    out.push_back(timed("checkpoint round trip is byte-identical", [] {
        Checkpoint c;
        c.config = {{"k", 1}};
        c.tensors.push_back({"w", Tensor<float>({2, 2}, {1.5f, -0.0f, 3e-38f, 7.0f})});
        c.step = 3;
        c.rng_state = Rng(1).state();
        const auto bytes = serialize_checkpoint(c);
        const bool same = serialize_checkpoint(deserialize_checkpoint(bytes)) == bytes;
        auto truncated = bytes;
        truncated.resize(bytes.size() / 2);
        bool named = false;
        try {
            deserialize_checkpoint(truncated);
        } catch (const CheckpointError& e) {
            named = std::string(e.what()).find("truncated") != std::string::npos;
        }
        return std::pair{same && named, std::string(same ? "identical" : "bytes differ") +
                                            (named ? ", truncation detected" : ", truncation missed")};
    }));

    out.push_back(timed("enhancer doubles resolution", [] {
        EnhancerConfig ec{8, 1, 2, 0.1};
        const Enhancer<float> e(ec, Rng(4));
        Tape<float> t;
        const Tensor<float> y = e.forward(t, Tensor<float>({3, 10, 12}, 0.5f));
        const bool ok = y.dims() == Shape{3, 20, 24};
        return std::pair{ok, shape_str(y.dims())};
    }));

    out.push_back(timed("gradient reaches first of two croppers", [] {
        ModelConfig c;
        c.input_size = 64;
        c.n_croppers = 2;
        c.gamma.widths = {4, 4, 8, 8, 8};
        c.cropper = {8, 4, 16, 8};
        c.enhancer = {4, 1, 2, 0.1};
        const DCEModel<float> m(c);
        const Tensor<float> photo = procedural_image(ProceduralKind::kForeground, 64, 64, 5).to_tensor<float>();
        const Tensor<float> gt = procedural_image(ProceduralKind::kForeground, 64, 64, 6).to_tensor<float>();
        const Tensor<float> gt_hr = procedural_image(ProceduralKind::kForeground, 128, 128, 6).to_tensor<float>();
        Tape<float> scratch;
        const Tensor<float> gf = m.gamma().forward(scratch, gt).detach();
        const Tensor<float> hf = hr_features(m.gamma(), gt_hr, 2);
        Tape<float> tape;
        const auto outs = m.forward(tape, photo);
        tape.backward(total_loss(tape, m, outs, gf, hf).total);
        double norm = 0.0;
        for (const auto& p : m.croppers()[0].parameters()) {
            for (float g : p.tensor.grad()) norm += static_cast<double>(g) * g;
        }
        return std::pair{norm > 0.0, "cropper0 grad norm " + std::to_string(std::sqrt(norm))};
    }));
    return out;
}

std::string render_checks(const std::vector<CheckOutcome>& checks) {
    std::size_t width = 8;
    for (const auto& c : checks) width = std::max(width, c.name.size());
    std::ostringstream os;
    int failed = 0;
    for (const auto& c : checks) {
        if (!c.passed) ++failed;
        os << (c.passed ? "PASS  " : "FAIL  ") << std::left << std::setw(static_cast<int>(width)) << c.name << "  "
           << std::right << std::fixed << std::setprecision(2) << std::setw(7) << c.seconds << "s  " << c.detail
           << '\n';
    }
    os << checks.size() - static_cast<std::size_t>(failed) << "/" << checks.size() << " checks passed\n";
    return os.str();
}

}  // namespace dce
