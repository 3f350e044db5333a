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
#include <string>
#include <vector>

#include "dce/rng.hpp"
#include "dce/tensor.hpp"

// Central finite-difference checks of tape gradients in double precision.
// The numerical side only ever calls the forward function.

namespace dce {

struct GradCheckOptions {
    int probes = 100;
    double epsilon = 1e-5;
    /// Denominator floor of the relative error, so components that are
    /// analytically ~0 are judged on absolute error instead.
    double rel_floor = 1e-3;
    double tolerance = 1e-5;
    std::uint64_t seed = 1;
};

struct GradCheckResult {
    int probes = 0;
    int skipped = 0;
    double max_rel_error = 0.0;
    std::string worst;  // description of the worst probe
    bool passed(double tol) const { return probes > 0 && max_rel_error <= tol; }
};

using LossFn = std::function<Tensor<double>(Tape<double>&)>;
/// Return false to exclude a probe near a non-smooth locus.
using ProbeFilter = std::function<bool(std::size_t leaf, std::size_t index)>;

/// Compares d(loss)/d(leaf) from one backward pass against central
/// differences at randomly chosen elements of the leaves.
GradCheckResult check_gradients(std::vector<Tensor<double>> leaves, const LossFn& loss,
                                const GradCheckOptions& options = {},
                                const ProbeFilter& filter = nullptr);

/// Reduces any tensor to a scalar with fixed random weights, so every
/// output element contributes a distinct coefficient.
Tensor<double> random_projection(Tape<double>& tape, const Tensor<double>& y, std::uint64_t seed);

}  // namespace dce
