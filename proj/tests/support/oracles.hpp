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

// Deliberately naive reference implementations used as test oracles. None of
// these share code with the library kernels.

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "dce/image.hpp"
#include "dce/rng.hpp"
#include "dce/tensor.hpp"

namespace dce::oracle {

template <typename T>
Tensor<T> random_tensor(Shape dims, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    Tensor<T> t(std::move(dims));
    for (T& v : t.mutable_data()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

/// Direct quadruple loop, explicit zero padding.
inline std::vector<double> conv2d(const std::vector<double>& x, int c_in, int h, int w,
                                  const std::vector<double>& wt, int c_out, int kh, int kw,
                                  const std::vector<double>& bias, int stride, int pad_top,
                                  int pad_left, int out_h, int out_w) {
    std::vector<double> out(static_cast<std::size_t>(c_out) * out_h * out_w);
    for (int o = 0; o < c_out; ++o) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                double s = bias.empty() ? 0.0 : bias[o];
                for (int c = 0; c < c_in; ++c) {
                    for (int i = 0; i < kh; ++i) {
                        for (int j = 0; j < kw; ++j) {
                            const int y = oy * stride + i - pad_top;
                            const int xx = ox * stride + j - pad_left;
                            if (y < 0 || y >= h || xx < 0 || xx >= w) continue;
                            s += wt[((o * c_in + c) * kh + i) * kw + j] * x[(c * h + y) * w + xx];
                        }
                    }
                }
                out[(o * out_h + oy) * out_w + ox] = s;
            }
        }
    }
    return out;
}

inline std::vector<double> matvec(const std::vector<double>& w, int m, int n,
                                  const std::vector<double>& x, const std::vector<double>& b) {
    std::vector<double> y(m);
    for (int i = 0; i < m; ++i) {
        double s = b[i];
        for (int j = 0; j < n; ++j) s += w[i * n + j] * x[j];
        y[i] = s;
    }
    return y;
}

/// Window scan; reduce = max or mean.
inline std::vector<double> pool(const std::vector<double>& x, int c, int h, int w, int k, bool max) {
    std::vector<double> out;
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < h / k; ++oy) {
            for (int ox = 0; ox < w / k; ++ox) {
                std::vector<double> window;
                for (int i = 0; i < k; ++i) {
                    for (int j = 0; j < k; ++j) window.push_back(x[(ch * h + oy * k + i) * w + ox * k + j]);
                }
                double r = 0;
                if (max) {
                    r = *std::max_element(window.begin(), window.end());
                } else {
                    for (double v : window) r += v;
                    r /= window.size();
                }
                out.push_back(r);
            }
        }
    }
    return out;
}

/// Gaussian-blurred random RGB image, values in [0,1].
inline ImageRGB smooth_image(int h, int w, double sigma, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> raw(static_cast<std::size_t>(3) * h * w);
    for (double& v : raw) v = rng.uniform();
    const int radius = static_cast<int>(std::ceil(3 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double ks = 0;
    for (int i = -radius; i <= radius; ++i) ks += kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    for (double& k : kernel) k /= ks;
    auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
    std::vector<double> tmp(raw.size()), out(raw.size());
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = 0;
                for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * raw[(c * h + y) * w + clampi(x + i, w)];
                tmp[(c * h + y) * w + x] = s;
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double s = 0;
                for (int i = -radius; i <= radius; ++i) s += kernel[i + radius] * tmp[(c * h + clampi(y + i, h)) * w + x];
                out[(c * h + y) * w + x] = s;
            }
        }
    }
    // Stretch the contrast back up; blurring uniform noise flattens it toward 0.5.
    double lo = 1, hi = 0;
    for (double v : out) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<float> chw(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) chw[i] = static_cast<float>((out[i] - lo) / std::max(hi - lo, 1e-9));
    return ImageRGB(h, w, std::move(chw));
}

// Direct 2-D window evaluation: weighted means, then centred second moments.
inline double ssim(const ImageRGB& a, const ImageRGB& b) {
    double g[11][11], gs = 0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) gs += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 2.25));
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0;
    for (int c = 0; c < 3; ++c) {
        double acc = 0;
        int windows = 0;
        for (int y = 0; y + 11 <= a.height(); ++y) {
            for (int x = 0; x + 11 <= a.width(); ++x) {
                double mx = 0, my = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        mx += g[i][j] / gs * a.at(c, y + i, x + j);
                        my += g[i][j] / gs * b.at(c, y + i, x + j);
                    }
                double vx = 0, vy = 0, cv = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const double dx = a.at(c, y + i, x + j) - mx, dy = b.at(c, y + i, x + j) - my;
                        vx += g[i][j] / gs * dx * dx;
                        vy += g[i][j] / gs * dy * dy;
                        cv += g[i][j] / gs * dx * dy;
                    }
                acc += (2 * mx * my + c1) * (2 * cv + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++windows;
            }
        }
        total += acc / windows;
    }
    return total / 3;
}

}  // namespace dce::oracle
