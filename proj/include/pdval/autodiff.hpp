/*
 * Copyright 2026 The pdval Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Reverse-mode differentiation over a recording tape.
//
// A Tape owns every value produced during one forward pass. Ops append a node
// holding the output value and a closure that, given the output gradient,
// accumulates into the gradients of its inputs. backward() walks the nodes in
// exact reverse recording order, which is a valid topological order because a
// node can only consume ids that already exist.
//
// Only the operations the two graph models need are provided. Everything is
// 64-bit; every forward output is checked for NaN/Inf.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace pdval {

/// Dense row-major tensor of rank 1 or 2.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);
    static Tensor zeros(std::vector<std::size_t> shape_);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
    static Tensor vector(std::initializer_list<double> values);

    std::size_t numel() const noexcept { return data.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    /// Rank-1 tensors are viewed as a column: rows = n, cols = 1.
    std::size_t rows() const noexcept { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const noexcept { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::string shape_string(const std::vector<std::size_t>& shape);

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const std::vector<double>& grad() const;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Records a constant (requires_grad = false) or a trainable leaf.
    Var leaf(Tensor value, bool requires_grad = false);

    /// Appends an op result. `inputs` are the ids the closure may touch.
    Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);

    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    const std::vector<double>& grad(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

    /// Gradient buffer for accumulation inside backward closures; only valid
    /// for nodes that require grad.
    std::vector<double>& grad_mut(std::size_t id);

    /// Seeds d(loss)/d(loss) = 1 and propagates. Gradients of leaves
    /// accumulate across calls; intermediate gradients are recomputed.
    void backward(Var loss);

    void zero_grad();

    std::size_t size() const noexcept { return nodes_.size(); }

    /// Smallest |x| seen at the input of any relu on this tape. Finite
    /// difference checks are only meaningful when this is well above the step.
    double relu_margin() const noexcept { return relu_margin_; }
    void note_relu_input(double x) noexcept;

private:
    struct Node {
        Tensor value;
        std::vector<double> grad;
        bool requires_grad = false;
        bool is_leaf = true;
        Backward backward;
    };
    std::vector<Node> nodes_;
    double relu_margin_ = std::numeric_limits<double>::infinity();
};

// ---- operations ----------------------------------------------------------

/// [m x k] . [k x n] -> [m x n]
Var matmul(Var a, Var b);
/// Elementwise sum of equal shapes.
Var add(Var a, Var b);
/// x [n x d] plus bias [d] (or [1 x d]) on every row.
Var add_bias(Var x, Var bias);
Var relu(Var x);
Var scale(Var x, double c);
/// Joins each row of a [n x p] with the matching row of b [n x q] -> [n x (p+q)].
Var concat_rows(Var a, Var b);
/// Embedding lookup: row i of the result is table[ids[i]]. Backward scatter-adds.
Var gather_rows(Var table, std::span<const std::size_t> ids);
/// Row i = sum of value rows whose segment is i; empty segments are zero rows.
Var segment_sum(Var values, std::span<const std::size_t> segments, std::size_t n);
/// Row i = mean of value rows whose segment is i; empty segments are zero rows.
Var segment_mean(Var values, std::span<const std::size_t> segments, std::size_t n);
/// Softmax of each column of scores [E] or [E x h] within every segment,
/// with max subtraction.
Var segment_softmax(Var scores, std::span<const std::size_t> segments, std::size_t n);
/// a, b [E x heads*d] -> [E x heads]: per-row, per-head dot products.
Var head_dot(Var a, Var b, std::size_t heads);
/// w [E x heads], v [E x heads*d] -> [E x heads*d]: head block h of row e scaled by w(e,h).
Var head_scale(Var w, Var v);
/// Sum of all entries -> [1].
Var sum(Var x);
/// (1/n) sum (pred - target)^2 over vector-like operands of equal length -> [1].
Var mse_loss(Var pred, Var target);

// ---- named parameters ------------------------------------------------------

using ParamSet = std::map<std::string, Tensor>;

/// Parameters bound as trainable leaves of one tape.
class BoundParams {
public:
    BoundParams(Tape& tape, const ParamSet& params);
    Var operator[](const std::string& name) const;
    /// Gradient of every parameter after backward, same layout as the ParamSet.
    ParamSet gradients() const;

private:
    Tape* tape_;
    std::map<std::string, Var> vars_;
};

} // namespace pdval
