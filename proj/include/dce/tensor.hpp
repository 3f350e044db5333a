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

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dce {

using Shape = std::vector<int>;

std::string shape_str(const Shape& dims);
std::size_t shape_numel(const Shape& dims);

/// Raised on any shape or size disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when backward() is asked to do something the tape cannot honour.
class GraphError : public std::logic_error {
 public:
    using std::logic_error::logic_error;
};

namespace detail {

template <typename T>
struct Node {
    Shape dims;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    bool from_tape = false;  // produced by a recorded op (not a leaf)
};

}  // namespace detail

/// Shared handle to an N-d array with optional gradient storage.
///
/// Copies alias the same storage, the way parameters and graph nodes are
/// passed around. Values are treated as immutable once an op has consumed
/// them; only gradients accumulate. Parameter updates go through
/// mutable_data() outside of any recorded graph.
template <typename T>
class Tensor {
 public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape dims, T fill = T(0));
    Tensor(Shape dims, std::vector<T> data);

    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& dims() const { return node_->dims; }
    int dim(int i) const { return node_->dims.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(node_->dims.size()); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const T> data() const { return node_->data; }
    std::span<T> mutable_data() { return node_->data; }
    T item() const;
    T operator[](std::size_t i) const { return node_->data[i]; }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    Tensor& set_requires_grad(bool on);
    bool is_leaf() const { return !node_->from_tape; }

    bool has_grad() const { return !node_->grad.empty(); }
    /// Gradient values; empty span when nothing has been accumulated yet.
    std::span<const T> grad() const { return node_->grad; }
    /// Gradient storage, zero-allocated on first use. Gradients stay writable
    /// through const handles; only values are immutable.
    std::span<T> grad_buffer() const;
    void zero_grad() const { node_->grad.clear(); }

    bool is_finite() const;
    /// Same values in a fresh node with no gradient history.
    Tensor detach() const;
    /// Same values and a new shape of equal element count, fresh node.
    Tensor reshaped(Shape dims) const;

    const void* id() const { return node_.get(); }

 private:
    template <typename U>
    friend class Tape;

    std::shared_ptr<detail::Node<T>> node_;
};

/// Ordered record of differentiable operations.
///
/// Each entry keeps its output handle plus a closure that reads the output
/// gradient and accumulates into its inputs. Entries are appended in
/// execution order, so every entry's inputs were produced earlier.
template <typename T>
class Tape {
 public:
    using BackwardFn = std::function<void()>;

    /// True when at least one operand wants a gradient.
    static bool needs_grad(std::initializer_list<const Tensor<T>*> inputs);

    /// Marks `output` as a graph node and stores its vector-Jacobian product.
    /// Undefined entries in `inputs` are ignored.
    void record(std::vector<Tensor<T>> inputs, Tensor<T>& output, BackwardFn fn);

    /// Reverse sweep from `loss`: intermediate gradients are recomputed from
    /// scratch, leaf gradients accumulate across calls.
    void backward(const Tensor<T>& loss, T seed = T(1));

    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

    /// Every recorded input that is itself a tape output appears earlier.
    bool is_topologically_ordered() const;

 private:
    struct Entry {
        std::vector<Tensor<T>> inputs;
        Tensor<T> output;
        BackwardFn fn;
    };
    std::vector<Entry> entries_;
};

template <typename T>
void backward(const Tensor<T>& loss, Tape<T>& tape) {
    tape.backward(loss);
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T>::Tensor(Shape dims, T fill) : node_(std::make_shared<detail::Node<T>>()) {
    for (int d : dims) {
        if (d <= 0) throw DimensionError("tensor dims must be positive, got " + shape_str(dims));
    }
    node_->data.assign(shape_numel(dims), fill);
    node_->dims = std::move(dims);
}

template <typename T>
Tensor<T>::Tensor(Shape dims, std::vector<T> data) : node_(std::make_shared<detail::Node<T>>()) {
    for (int d : dims) {
        if (d <= 0) throw DimensionError("tensor dims must be positive, got " + shape_str(dims));
    }
    if (shape_numel(dims) != data.size()) {
        throw DimensionError("tensor dims " + shape_str(dims) + " do not match " +
                             std::to_string(data.size()) + " values");
    }
    node_->dims = std::move(dims);
    node_->data = std::move(data);
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of dims " + shape_str(dims()));
    return node_->data[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
    node_->requires_grad = on;
    if (!on) node_->grad.clear();
    return *this;
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() const {
    if (node_->grad.empty()) node_->grad.assign(node_->data.size(), T(0));
    return node_->grad;
}

template <typename T>
bool Tensor<T>::is_finite() const {
    for (T v : node_->data) {
        if (!std::isfinite(v)) return false;
    }
    for (T v : node_->grad) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor(node_->dims, node_->data);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape dims) const {
    return Tensor(std::move(dims), node_->data);
}

template <typename T>
bool Tape<T>::needs_grad(std::initializer_list<const Tensor<T>*> inputs) {
    for (const Tensor<T>* t : inputs) {
        if (t != nullptr && t->requires_grad()) return true;
    }
    return false;
}

template <typename T>
void Tape<T>::record(std::vector<Tensor<T>> inputs, Tensor<T>& output, BackwardFn fn) {
    std::erase_if(inputs, [](const Tensor<T>& t) { return !t.defined(); });
    output.node_->requires_grad = true;
    output.node_->from_tape = true;
    entries_.push_back(Entry{std::move(inputs), output, std::move(fn)});
}

template <typename T>
bool Tape<T>::is_topologically_ordered() const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        for (const Tensor<T>& in : entries_[i].inputs) {
            for (std::size_t j = i; j < entries_.size(); ++j) {
                if (entries_[j].output.id() == in.id()) return false;
            }
        }
    }
    return true;
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss, T seed) {
    if (!loss.defined() || loss.numel() != 1) {
        throw GraphError("backward() needs a scalar loss, got dims " +
                         (loss.defined() ? shape_str(loss.dims()) : std::string("<undefined>")));
    }
    std::size_t end = entries_.size();
    while (end > 0 && entries_[end - 1].output.id() != loss.id()) --end;
    if (end == 0) throw GraphError("backward(): loss was not produced on this tape (detached graph)");

    for (std::size_t i = 0; i < end; ++i) entries_[i].output.node_->grad.clear();
    // Leaves collect this sweep in fresh buffers and add the earlier total at
    // the end, so repeated sweeps sum per sweep rather than per contribution.
    std::unordered_map<const void*, std::pair<Tensor<T>, std::vector<T>>> held;
    for (std::size_t i = 0; i < end; ++i) {
        for (const Tensor<T>& in : entries_[i].inputs) {
            if (in.node_->from_tape || held.contains(in.id())) continue;
            held.emplace(in.id(), std::make_pair(in, std::move(in.node_->grad)));
            in.node_->grad.clear();
        }
    }
    Tensor<T> root = loss;
    root.grad_buffer()[0] = seed;

    for (std::size_t i = end; i-- > 0;) {
        if (!entries_[i].output.has_grad()) continue;
        entries_[i].fn();
    }
    for (auto& [id, entry] : held) {
        auto& [leaf, before] = entry;
        if (before.empty()) continue;
        if (leaf.node_->grad.empty()) {
            leaf.node_->grad = std::move(before);
        } else {
            for (std::size_t k = 0; k < before.size(); ++k) leaf.node_->grad[k] += before[k];
        }
    }
}

}  // namespace dce
