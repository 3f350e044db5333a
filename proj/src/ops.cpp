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

#include "dce/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

namespace dce {

std::string shape_str(const Shape& dims) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << 'x';
        os << dims[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_numel(const Shape& dims) {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    return n;
}

namespace detail {

void require(bool ok, const std::string& message) {
    if (!ok) throw DimensionError(message);
}

template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int n, int k, bool trans_a, bool trans_b,
          bool accumulate) {
    using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using ColMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
    Eigen::Map<RowMat> cm(c, m, n);
    // A row-major [k,m] buffer is the column-major view of its transpose.
    auto run = [&](const auto& am, const auto& bm) {
        if (accumulate) {
            cm.noalias() += am * bm;
        } else {
            cm.noalias() = am * bm;
        }
    };
    if (!trans_a && !trans_b) {
        run(Eigen::Map<const RowMat>(a, m, k), Eigen::Map<const RowMat>(b, k, n));
    } else if (trans_a && !trans_b) {
        run(Eigen::Map<const ColMat>(a, m, k), Eigen::Map<const RowMat>(b, k, n));
    } else if (!trans_a && trans_b) {
        run(Eigen::Map<const RowMat>(a, m, k), Eigen::Map<const ColMat>(b, k, n));
    } else {
        run(Eigen::Map<const ColMat>(a, m, k), Eigen::Map<const ColMat>(b, k, n));
    }
}

template void gemm<float>(const float*, const float*, float*, int, int, int, bool, bool, bool);
template void gemm<double>(const double*, const double*, double*, int, int, int, bool, bool,
                           bool);

}  // namespace detail

using detail::require;

namespace {

void require_chw(const Shape& d, const char* op) {
    require(d.size() == 3, std::string(op) + ": expected a [C,H,W] tensor, got " + shape_str(d));
}

template <typename T>
void accumulate(const Tensor<T>& target, std::span<const T> values) {
    auto g = target.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += values[i];
}

struct Im2Col {
    int channels, height, width;
    int kh, kw, stride;
    int out_h, out_w, pad_top, pad_left;

    int rows() const { return channels * kh * kw; }
    int cols() const { return out_h * out_w; }

    template <typename T>
    void gather(const T* x, T* col) const {
        for (int c = 0; c < channels; ++c) {
            for (int i = 0; i < kh; ++i) {
                for (int j = 0; j < kw; ++j) {
                    T* row = col + static_cast<std::size_t>((c * kh + i) * kw + j) * cols();
                    for (int oy = 0; oy < out_h; ++oy) {
                        const int y = oy * stride + i - pad_top;
                        T* dst = row + static_cast<std::size_t>(oy) * out_w;
                        if (y < 0 || y >= height) {
                            std::fill(dst, dst + out_w, T(0));
                            continue;
                        }
                        const T* src = x + (static_cast<std::size_t>(c) * height + y) * width;
                        for (int ox = 0; ox < out_w; ++ox) {
                            const int xx = ox * stride + j - pad_left;
                            dst[ox] = (xx >= 0 && xx < width) ? src[xx] : T(0);
                        }
                    }
                }
            }
        }
    }

    template <typename T>
    void scatter(const T* col, T* dx) const {
        for (int c = 0; c < channels; ++c) {
            for (int i = 0; i < kh; ++i) {
                for (int j = 0; j < kw; ++j) {
                    const T* row = col + static_cast<std::size_t>((c * kh + i) * kw + j) * cols();
                    for (int oy = 0; oy < out_h; ++oy) {
                        const int y = oy * stride + i - pad_top;
                        if (y < 0 || y >= height) continue;
                        const T* src = row + static_cast<std::size_t>(oy) * out_w;
                        T* dst = dx + (static_cast<std::size_t>(c) * height + y) * width;
                        for (int ox = 0; ox < out_w; ++ox) {
                            const int xx = ox * stride + j - pad_left;
                            if (xx >= 0 && xx < width) dst[xx] += src[ox];
                        }
                    }
                }
            }
        }
    }

    bool is_identity() const {
        return kh == 1 && kw == 1 && stride == 1 && pad_top == 0 && pad_left == 0;
    }
};

}  // namespace

ConvGeometry conv_geometry(int in, int kernel, int stride, Padding padding) {
    require(stride >= 1, "conv2d: stride must be >= 1, got " + std::to_string(stride));
    if (padding == Padding::kValid) {
        require(in >= kernel, "conv2d: kernel " + std::to_string(kernel) +
                                  " larger than input extent " + std::to_string(in));
        return {(in - kernel) / stride + 1, 0};
    }
    const int out = (in + stride - 1) / stride;
    const int total = std::max((out - 1) * stride + kernel - in, 0);
    return {out, total / 2};
}

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, Padding padding) {
    require_chw(input.dims(), "conv2d");
    require(weight.rank() == 4,
            "conv2d: weight must be [C_out,C_in,kH,kW], got " + shape_str(weight.dims()));
    require(weight.dim(1) == input.dim(0),
            "conv2d: input has " + std::to_string(input.dim(0)) + " channels but weight " +
                shape_str(weight.dims()) + " expects " + std::to_string(weight.dim(1)));
    const int c_out = weight.dim(0);
    if (bias.defined()) {
        require(bias.numel() == static_cast<std::size_t>(c_out),
                "conv2d: bias " + shape_str(bias.dims()) + " does not match " +
                    std::to_string(c_out) + " output channels");
    }
    const ConvGeometry gy = conv_geometry(input.dim(1), weight.dim(2), stride, padding);
    const ConvGeometry gx = conv_geometry(input.dim(2), weight.dim(3), stride, padding);
    const Im2Col geo{input.dim(0), input.dim(1), input.dim(2), weight.dim(2), weight.dim(3),
                     stride,       gy.out,       gx.out,       gy.pad_before, gx.pad_before};

    const int k = geo.rows();
    const int p = geo.cols();
    auto col = std::make_shared<std::vector<T>>();
    const T* col_ptr = input.data().data();
    if (!geo.is_identity()) {
        col->resize(static_cast<std::size_t>(k) * p);
        geo.gather(input.data().data(), col->data());
        col_ptr = col->data();
    }

    Tensor<T> out(Shape{c_out, geo.out_h, geo.out_w});
    T* y = out.mutable_data().data();
    detail::gemm(weight.data().data(), col_ptr, y, c_out, p, k, false, false, false);
    if (bias.defined()) {
        for (int o = 0; o < c_out; ++o) {
            const T b = bias[o];
            T* row = y + static_cast<std::size_t>(o) * p;
            for (int i = 0; i < p; ++i) row[i] += b;
        }
    }

    if (Tape<T>::needs_grad({&input, &weight, &bias})) {
        tape.record({input, weight, bias}, out,
                    [input, weight, bias, out, col, geo]() mutable {
                        const int k = geo.rows();
                        const int p = geo.cols();
                        const int c_out = weight.dim(0);
                        const T* g = out.grad().data();
                        if (bias.requires_grad()) {
                            auto db = bias.grad_buffer();
                            for (int o = 0; o < c_out; ++o) {
                                const T* row = g + static_cast<std::size_t>(o) * p;
                                T s = 0;
                                for (int i = 0; i < p; ++i) s += row[i];
                                db[o] += s;
                            }
                        }
                        if (weight.requires_grad()) {
                            const T* cp = geo.is_identity() ? input.data().data() : col->data();
                            detail::gemm(g, cp, weight.grad_buffer().data(), c_out, k, p, false,
                                         true, true);
                        }
                        if (input.requires_grad()) {
                            if (geo.is_identity()) {
                                detail::gemm(weight.data().data(), g, input.grad_buffer().data(),
                                             k, p, c_out, true, false, true);
                            } else {
                                std::vector<T> dcol(static_cast<std::size_t>(k) * p);
                                detail::gemm(weight.data().data(), g, dcol.data(), k, p, c_out,
                                             true, false, false);
                                geo.scatter(dcol.data(), input.grad_buffer().data());
                            }
                        }
                    });
    }
    return out;
}

template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
    require(weight.rank() == 2, "linear: weight must be [M,N], got " + shape_str(weight.dims()));
    const int m = weight.dim(0);
    const int n = weight.dim(1);
    require(input.numel() == static_cast<std::size_t>(n),
            "linear: input " + shape_str(input.dims()) + " does not match weight " +
                shape_str(weight.dims()));
    if (bias.defined()) {
        require(bias.numel() == static_cast<std::size_t>(m),
                "linear: bias " + shape_str(bias.dims()) + " does not match weight " +
                    shape_str(weight.dims()));
    }
    Tensor<T> out(Shape{m});
    auto y = out.mutable_data();
    const auto w = weight.data();
    const auto x = input.data();
    for (int i = 0; i < m; ++i) {
        T s = bias.defined() ? bias[i] : T(0);
        const T* row = w.data() + static_cast<std::size_t>(i) * n;
        T acc = 0;
        for (int j = 0; j < n; ++j) acc += row[j] * x[j];
        y[i] = s + acc;
    }
    if (Tape<T>::needs_grad({&input, &weight, &bias})) {
        tape.record({input, weight, bias}, out,
                    [input, weight, bias, out, m, n]() mutable {
                        const auto g = out.grad();
                        if (bias.requires_grad()) accumulate(bias, g);
                        if (weight.requires_grad()) {
                            auto dw = weight.grad_buffer();
                            const auto x = input.data();
                            for (int i = 0; i < m; ++i) {
                                T* row = dw.data() + static_cast<std::size_t>(i) * n;
                                for (int j = 0; j < n; ++j) row[j] += g[i] * x[j];
                            }
                        }
                        if (input.requires_grad()) {
                            auto dx = input.grad_buffer();
                            const auto w = weight.data();
                            for (int i = 0; i < m; ++i) {
                                const T* row = w.data() + static_cast<std::size_t>(i) * n;
                                for (int j = 0; j < n; ++j) dx[j] += g[i] * row[j];
                            }
                        }
                    });
    }
    return out;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& input) {
    Tensor<T> out(input.dims());
    auto y = out.mutable_data();
    const auto x = input.data();
    // NaN passes through so a diverged value stays visible in the loss.
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) || std::isnan(x[i]) ? x[i] : T(0);
    if (input.requires_grad()) {
        tape.record({input}, out, [input, out]() mutable {
            const auto g = out.grad();
            const auto x = input.data();
            auto dx = input.grad_buffer();
            for (std::size_t i = 0; i < x.size(); ++i) {
                if (x[i] > T(0)) dx[i] += g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> maxpool2d(Tape<T>& tape, const Tensor<T>& input, int k) {
    require_chw(input.dims(), "maxpool2d");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    require(k >= 1 && h % k == 0 && w % k == 0,
            "maxpool2d: " + shape_str(input.dims()) + " not divisible by window " +
                std::to_string(k));
    const int oh = h / k, ow = w / k;
    Tensor<T> out(Shape{c, oh, ow});
    auto y = out.mutable_data();
    const auto x = input.data();
    auto argmax = std::make_shared<std::vector<std::size_t>>(y.size());
    std::size_t o = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox, ++o) {
                std::size_t best = (static_cast<std::size_t>(ch) * h + oy * k) * w + ox * k;
                for (int i = 0; i < k; ++i) {
                    const std::size_t base = (static_cast<std::size_t>(ch) * h + oy * k + i) * w;
                    for (int j = 0; j < k; ++j) {
                        const std::size_t idx = base + ox * k + j;
                        if (x[idx] > x[best] || std::isnan(x[idx])) best = idx;
                    }
                }
                y[o] = x[best];
                (*argmax)[o] = best;
            }
        }
    }
    if (input.requires_grad()) {
        tape.record({input}, out, [input, out, argmax]() mutable {
            const auto g = out.grad();
            auto dx = input.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) dx[(*argmax)[i]] += g[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> avgpool2d(Tape<T>& tape, const Tensor<T>& input, int k) {
    require_chw(input.dims(), "avgpool2d");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    require(k >= 1 && h % k == 0 && w % k == 0,
            "avgpool2d: " + shape_str(input.dims()) + " not divisible by window " +
                std::to_string(k));
    const int oh = h / k, ow = w / k;
    const T inv = T(1) / static_cast<T>(k * k);
    Tensor<T> out(Shape{c, oh, ow});
    auto y = out.mutable_data();
    const auto x = input.data();
    std::size_t o = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox, ++o) {
                T s = 0;
                for (int i = 0; i < k; ++i) {
                    const std::size_t base = (static_cast<std::size_t>(ch) * h + oy * k + i) * w;
                    for (int j = 0; j < k; ++j) s += x[base + ox * k + j];
                }
                y[o] = s * inv;
            }
        }
    }
    if (input.requires_grad()) {
        tape.record({input}, out, [input, out, k, inv]() mutable {
            const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
            const int oh = h / k, ow = w / k;
            const auto g = out.grad();
            auto dx = input.grad_buffer();
            std::size_t o = 0;
            for (int ch = 0; ch < c; ++ch) {
                for (int oy = 0; oy < oh; ++oy) {
                    for (int ox = 0; ox < ow; ++ox, ++o) {
                        const T v = g[o] * inv;
                        for (int i = 0; i < k; ++i) {
                            const std::size_t base =
                                (static_cast<std::size_t>(ch) * h + oy * k + i) * w;
                            for (int j = 0; j < k; ++j) dx[base + ox * k + j] += v;
                        }
                    }
                }
            }
        });
    }
    return out;
}

namespace {

// Index map shared by shuffle and unshuffle: for each element of the
// low-resolution [C*r*r, H, W] layout, its offset in the [C, H*r, W*r] layout.
std::vector<std::size_t> shuffle_map(int c, int h, int w, int r) {
    std::vector<std::size_t> map(static_cast<std::size_t>(c) * r * r * h * w);
    const int oh = h * r, ow = w * r;
    std::size_t s = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < r; ++j) {
                for (int y = 0; y < h; ++y) {
                    for (int x = 0; x < w; ++x, ++s) {
                        map[s] = (static_cast<std::size_t>(ch) * oh + y * r + i) * ow + x * r + j;
                    }
                }
            }
        }
    }
    return map;
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(Tape<T>& tape, const Tensor<T>& input, int r) {
    require_chw(input.dims(), "pixel_shuffle");
    require(r >= 1 && input.dim(0) % (r * r) == 0,
            "pixel_shuffle: channel count " + std::to_string(input.dim(0)) +
                " not divisible by r^2 = " + std::to_string(r * r));
    const int c = input.dim(0) / (r * r), h = input.dim(1), w = input.dim(2);
    auto map = std::make_shared<std::vector<std::size_t>>(shuffle_map(c, h, w, r));
    Tensor<T> out(Shape{c, h * r, w * r});
    auto y = out.mutable_data();
    const auto x = input.data();
    for (std::size_t i = 0; i < x.size(); ++i) y[(*map)[i]] = x[i];
    if (input.requires_grad()) {
        tape.record({input}, out, [input, out, map]() mutable {
            const auto g = out.grad();
            auto dx = input.grad_buffer();
            for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[(*map)[i]];
        });
    }
    return out;
}

template <typename T>
Tensor<T> pixel_unshuffle(Tape<T>& tape, const Tensor<T>& input, int r) {
    require_chw(input.dims(), "pixel_unshuffle");
    require(r >= 1 && input.dim(1) % r == 0 && input.dim(2) % r == 0,
            "pixel_unshuffle: spatial dims " + shape_str(input.dims()) +
                " not divisible by r = " + std::to_string(r));
    const int c = input.dim(0), h = input.dim(1) / r, w = input.dim(2) / r;
    auto map = std::make_shared<std::vector<std::size_t>>(shuffle_map(c, h, w, r));
    Tensor<T> out(Shape{c * r * r, h, w});
    auto y = out.mutable_data();
    const auto x = input.data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[(*map)[i]];
    if (input.requires_grad()) {
        tape.record({input}, out, [input, out, map]() mutable {
            const auto g = out.grad();
            auto dx = input.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) dx[(*map)[i]] += g[i];
        });
    }
    return out;
}

namespace {

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    require(a.dims() == b.dims(), std::string(op) + ": operand dims " + shape_str(a.dims()) +
                                      " and " + shape_str(b.dims()) + " differ");
}

}  // namespace

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_same(a, b, "add");
    Tensor<T> out(a.dims());
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] + b[i];
    if (Tape<T>::needs_grad({&a, &b})) {
        tape.record({a, b}, out, [a, b, out]() mutable {
            if (a.requires_grad()) accumulate(a, out.grad());
            if (b.requires_grad()) accumulate(b, out.grad());
        });
    }
    return out;
}

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_same(a, b, "sub");
    Tensor<T> out(a.dims());
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] - b[i];
    if (Tape<T>::needs_grad({&a, &b})) {
        tape.record({a, b}, out, [a, b, out]() mutable {
            const auto g = out.grad();
            if (a.requires_grad()) accumulate(a, g);
            if (b.requires_grad()) {
                auto db = b.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
    require_same(a, b, "mul");
    Tensor<T> out(a.dims());
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * b[i];
    if (Tape<T>::needs_grad({&a, &b})) {
        tape.record({a, b}, out, [a, b, out]() mutable {
            const auto g = out.grad();
            if (a.requires_grad()) {
                auto da = a.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[i];
            }
            if (b.requires_grad()) {
                auto db = b.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor) {
    Tensor<T> out(a.dims());
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[i] * factor;
    if (a.requires_grad()) {
        tape.record({a}, out, [a, out, factor]() mutable {
            const auto g = out.grad();
            auto da = a.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * factor;
        });
    }
    return out;
}

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& a, Shape dims) {
    require(shape_numel(dims) == a.numel(),
            "reshape: cannot view " + shape_str(a.dims()) + " as " + shape_str(dims));
    Tensor<T> out = a.reshaped(std::move(dims));
    if (a.requires_grad()) {
        tape.record({a}, out, [a, out]() mutable { accumulate(a, out.grad()); });
    }
    return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a) {
    T s = 0;
    for (T v : a.data()) s += v;
    Tensor<T> out = Tensor<T>::scalar(s);
    if (a.requires_grad()) {
        tape.record({a}, out, [a, out]() mutable {
            const T g = out.grad()[0];
            for (T& d : a.grad_buffer()) d += g;
        });
    }
    return out;
}

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& a) {
    return scale(tape, sum(tape, a), T(1) / static_cast<T>(a.numel()));
}

#define DCE_INSTANTIATE_OPS(T)                                                                   \
    template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                              int, Padding);                                                     \
    template Tensor<T> linear(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);   \
    template Tensor<T> relu(Tape<T>&, const Tensor<T>&);                                         \
    template Tensor<T> maxpool2d(Tape<T>&, const Tensor<T>&, int);                               \
    template Tensor<T> avgpool2d(Tape<T>&, const Tensor<T>&, int);                               \
    template Tensor<T> pixel_shuffle(Tape<T>&, const Tensor<T>&, int);                           \
    template Tensor<T> pixel_unshuffle(Tape<T>&, const Tensor<T>&, int);                         \
    template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> sub(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                     \
    template Tensor<T> reshape(Tape<T>&, const Tensor<T>&, Shape);                               \
    template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                          \
    template Tensor<T> mean(Tape<T>&, const Tensor<T>&);

DCE_INSTANTIATE_OPS(float)
DCE_INSTANTIATE_OPS(double)

}  // namespace dce
