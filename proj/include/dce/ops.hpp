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

#include "dce/tensor.hpp"

// Differentiable primitives. Every op takes the tape first; it records a
// backward closure only when some operand requires a gradient, so inference
// with constant inputs leaves the tape empty.
//
// Image-like tensors are single samples laid out [C, H, W].

namespace dce {

enum class Padding { kValid, kSame };

/// Output extent and leading pad for one spatial axis.
struct ConvGeometry {
    int out = 0;
    int pad_before = 0;
};
ConvGeometry conv_geometry(int in, int kernel, int stride, Padding padding);

/// Cross-correlation. `same` pads so that out = ceil(in / stride); an odd
/// total pad puts the extra row/column on the bottom/right. `bias` may be an
/// undefined tensor.
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride = 1, Padding padding = Padding::kValid);

/// weight [M,N] times input (N elements, any shape) plus bias [M].
template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias);

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& input);

/// k x k window maximum; ties route the gradient to the first element in
/// row-major window order.
template <typename T>
Tensor<T> maxpool2d(Tape<T>& tape, const Tensor<T>& input, int k);

template <typename T>
Tensor<T> avgpool2d(Tape<T>& tape, const Tensor<T>& input, int k);

/// [C*r*r, H, W] -> [C, H*r, W*r]; out[c, h*r+i, w*r+j] = in[c*r*r + i*r + j, h, w].
template <typename T>
Tensor<T> pixel_shuffle(Tape<T>& tape, const Tensor<T>& input, int r);

template <typename T>
Tensor<T> pixel_unshuffle(Tape<T>& tape, const Tensor<T>& input, int r);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product.
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& a, T factor);

template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& a, Shape dims);

template <typename T>
Tensor<T> flatten(Tape<T>& tape, const Tensor<T>& a) {
    return reshape(tape, a, Shape{static_cast<int>(a.numel())});
}

/// Sum of all elements, fixed sequential order.
template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& a);

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& a);

namespace detail {

/// Row-major GEMM helpers shared by the conv and linear kernels.
/// c[m,n] (+)= a[m,k] * b[k,n], with optional transposes of a or b.
template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int n, int k, bool trans_a, bool trans_b,
          bool accumulate);

void require(bool ok, const std::string& message);

}  // namespace detail

}  // namespace dce
