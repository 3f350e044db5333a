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

#include <string>
#include <vector>

#include "dce/gradcheck.hpp"

// Built-in sanity suite behind `dce selftest`.

namespace dce {

struct CheckOutcome {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

/// Analytic vs central-difference gradients for every differentiable op
/// and both losses, in double precision.
std::vector<CheckOutcome> gradient_checks(const GradCheckOptions& options = {});

/// Fast structural checks: identity resampling, warp composition, metric
/// closed forms, generator bounds, checkpoint round trip.
std::vector<CheckOutcome> invariant_checks();

/// One line per check plus a summary line.
std::string render_checks(const std::vector<CheckOutcome>& checks);

}  // namespace dce
