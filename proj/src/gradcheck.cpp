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

#include "dce/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dce/ops.hpp"

namespace dce {

Tensor<double> random_projection(Tape<double>& tape, const Tensor<double>& y, std::uint64_t seed) {
    Rng rng(seed);
    Tensor<double> w(y.dims());
    for (double& v : w.mutable_data()) v = rng.uniform(-1.0, 1.0);
    return sum(tape, mul(tape, y, w));
}

GradCheckResult check_gradients(std::vector<Tensor<double>> leaves, const LossFn& loss,
                                const GradCheckOptions& options, const ProbeFilter& filter) {
    for (auto& leaf : leaves) {
        leaf.set_requires_grad(true);
        leaf.zero_grad();
    }
    {
        Tape<double> tape;
        const Tensor<double> l = loss(tape);
        tape.backward(l);
    }
    std::vector<std::vector<double>> analytic;
    for (const auto& leaf : leaves) {
        auto g = leaf.grad();
        analytic.emplace_back(g.begin(), g.end());
        if (analytic.back().empty()) analytic.back().assign(leaf.numel(), 0.0);
    }

    auto evaluate = [&]() {
        Tape<double> tape;
        return loss(tape).item();
    };

    GradCheckResult result;
    Rng rng(options.seed);
    const int max_draws = options.probes * 50;
    for (int draw = 0; draw < max_draws && result.probes < options.probes; ++draw) {
        const std::size_t li = rng.below(leaves.size());
        const std::size_t idx = rng.below(leaves[li].numel());
        if (filter && !filter(li, idx)) {
            ++result.skipped;
            continue;
        }
        auto data = leaves[li].mutable_data();
        const double saved = data[idx];
        data[idx] = saved + options.epsilon;
        const double up = evaluate();
        data[idx] = saved - options.epsilon;
        const double down = evaluate();
        data[idx] = saved;
        const double numeric = (up - down) / (2.0 * options.epsilon);
        const double a = analytic[li][idx];
        const double denom = std::max({std::abs(a), std::abs(numeric), options.rel_floor});
        const double rel = std::abs(a - numeric) / denom;
        if (rel > result.max_rel_error || result.worst.empty()) {
            std::ostringstream os;
            os << "leaf " << li << " index " << idx << ": analytic " << a << " numeric " << numeric;
            if (rel >= result.max_rel_error) result.worst = os.str();
            result.max_rel_error = std::max(result.max_rel_error, rel);
        }
        ++result.probes;
    }
    return result;
}

}  // namespace dce
