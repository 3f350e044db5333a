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

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace dce {

std::uint64_t splitmix64(std::uint64_t x);

/// Seeded 64-bit generator with name/index splitting.
///
/// Distributions are computed here rather than through <random>'s
/// distribution classes, whose output is implementation-defined.
class Rng {
 public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(splitmix64(seed)) {}

    std::uint64_t seed() const { return seed_; }

    /// Independent stream keyed by a name (e.g. a layer name).
    Rng split(std::string_view name) const;
    /// Independent stream keyed by an index (e.g. a sample number).
    Rng split(std::uint64_t index) const;

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);
    /// Standard normal via Box-Muller.
    double normal();

    std::string state() const;
    void set_state(const std::string& blob);

 private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace dce
