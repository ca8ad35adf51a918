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

#include "pdval/autodiff.hpp"

#include "pdval/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pdval {

// ---- Tensor ----------------------------------------------------------------

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void check_finite(const Tensor& t, const char* op) {
    for (double x : t.data)
        if (!std::isfinite(x)) throw NonFinite(std::string(op) + " produced a non-finite value");
}

bool vector_like(const Tensor& t) { return t.rank() == 1 || (t.rank() == 2 && t.cols() == 1); }

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw InvalidShape(std::string(op) + " expects a matrix, got " + shape_string(t.shape));
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    if (shape.empty() || shape.size() > 2) throw InvalidShape("tensor rank must be 1 or 2");
    if (product(shape) != data.size())
        throw InvalidShape("data length " + std::to_string(data.size()) + " does not match shape " +
                           shape_string(shape));
}

Tensor Tensor::zeros(std::vector<std::size_t> shape_) {
    const std::size_t n = product(shape_);
    return Tensor(std::move(shape_), std::vector<double>(n, 0.0));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// ---- Tape ------------------------------------------------------------------

const Tensor& Var::value() const { return tape->value(id); }
const std::vector<double>& Var::grad() const { return tape->grad(id); }

Var Tape::leaf(Tensor value, bool requires_grad) {
    check_finite(value, "leaf");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.is_leaf = true;
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    check_finite(value, "op");
    bool rg = false;
    for (const Var& v : inputs) {
        if (v.tape != this) throw ContractError("operands recorded on a different tape");
        rg = rg || nodes_.at(v.id).requires_grad;
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = rg;
    n.is_leaf = false;
    if (rg) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
}

const std::vector<double>& Tape::grad(std::size_t id) const {
    static const std::vector<double> empty;
    const Node& n = nodes_.at(id);
    return n.grad.empty() && !n.requires_grad ? empty : n.grad;
}

std::vector<double>& Tape::grad_mut(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.size() != n.value.numel()) n.grad.assign(n.value.numel(), 0.0);
    return n.grad;
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw ContractError("loss belongs to a different tape");
    const Node& ln = nodes_.at(loss.id);
    if (ln.value.numel() != 1) throw ContractError("backward needs a scalar loss, got " + shape_string(ln.value.shape));
    if (!ln.requires_grad) return;

    for (std::size_t i = 0; i <= loss.id; ++i) {
        Node& n = nodes_[i];
        if (!n.requires_grad) continue;
        if (!n.is_leaf || n.grad.size() != n.value.numel()) n.grad.assign(n.value.numel(), 0.0);
    }
    nodes_[loss.id].grad[0] += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.requires_grad && n.backward) n.backward(*this, i);
    }
}

void Tape::zero_grad() {
    for (auto& n : nodes_)
        if (!n.grad.empty()) std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

void Tape::note_relu_input(double x) noexcept { relu_margin_ = std::min(relu_margin_, std::abs(x)); }

// ---- operations ------------------------------------------------------------

Var matmul(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_rank2(A, "matmul");
    require_rank2(B, "matmul");
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    if (B.rows() != k)
        throw InvalidShape("matmul inner extents differ: " + shape_string(A.shape) + " . " + shape_string(B.shape));
    Tensor C = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A.data[i * k + p];
            if (aip == 0.0) continue;
            const double* brow = &B.data[p * n];
            double* crow = &C.data[i * n];
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(C), {a, b}, [ia, ib, m, k, n](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& Av = t.value(ia).data;
        const auto& Bv = t.value(ib).data;
        if (t.requires_grad(ia)) {
            auto& ga = t.grad_mut(ia); // g . B^T
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * Bv[p * n + j];
                    ga[i * k + p] += acc;
                }
        }
        if (t.requires_grad(ib)) {
            auto& gb = t.grad_mut(ib); // A^T . g
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = Av[i * k + p];
                    if (aip == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
                }
        }
    });
}

Var add(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.shape != B.shape) throw InvalidShape("add: " + shape_string(A.shape) + " vs " + shape_string(B.shape));
    Tensor C = A;
    for (std::size_t i = 0; i < C.numel(); ++i) C.data[i] += B.data[i];
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(C), {a, b}, [ia, ib](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        for (std::size_t id : {ia, ib}) {
            if (!t.requires_grad(id)) continue;
            auto& gi = t.grad_mut(id);
            for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
        }
    });
}

Var add_bias(Var x, Var bias) {
    const Tensor& X = x.value();
    const Tensor& B = bias.value();
    require_rank2(X, "add_bias");
    const std::size_t n = X.rows(), d = X.cols();
    if (B.numel() != d || (B.rank() == 2 && B.rows() != 1))
        throw InvalidShape("add_bias: bias " + shape_string(B.shape) + " for input " + shape_string(X.shape));
    Tensor Y = X;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) Y.data[i * d + j] += B.data[j];
    const std::size_t ix = x.id, ib = bias.id;
    return x.tape->record(std::move(Y), {x, bias}, [ix, ib, n, d](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(ix)) {
            auto& gx = t.grad_mut(ix);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.requires_grad(ib)) {
            auto& gb = t.grad_mut(ib);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
        }
    });
}

Var relu(Var x) {
    Tensor Y = x.value();
    for (double& v : Y.data) {
        x.tape->note_relu_input(v);
        if (v < 0.0) v = 0.0;
    }
    const std::size_t ix = x.id;
    return x.tape->record(std::move(Y), {x}, [ix](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& X = t.value(ix).data;
        auto& gx = t.grad_mut(ix);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (X[i] > 0.0) gx[i] += g[i]; // subgradient 0 at the kink
    });
}

Var scale(Var x, double c) {
    if (!std::isfinite(c)) throw InvalidInput("scale factor must be finite");
    Tensor Y = x.value();
    for (double& v : Y.data) v *= c;
    const std::size_t ix = x.id;
    return x.tape->record(std::move(Y), {x}, [ix, c](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad_mut(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    });
}

Var concat_rows(Var a, Var b) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_rank2(A, "concat_rows");
    require_rank2(B, "concat_rows");
    if (A.rows() != B.rows())
        throw InvalidShape("concat_rows: row counts differ " + shape_string(A.shape) + " vs " + shape_string(B.shape));
    const std::size_t n = A.rows(), p = A.cols(), q = B.cols();
    Tensor C = Tensor::zeros({n, p + q});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(&A.data[i * p], p, &C.data[i * (p + q)]);
        std::copy_n(&B.data[i * q], q, &C.data[i * (p + q) + p]);
    }
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(C), {a, b}, [ia, ib, n, p, q](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        if (t.requires_grad(ia)) {
            auto& ga = t.grad_mut(ia);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += g[i * (p + q) + j];
        }
        if (t.requires_grad(ib)) {
            auto& gb = t.grad_mut(ib);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += g[i * (p + q) + p + j];
        }
    });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
    const Tensor& T = table.value();
    require_rank2(T, "gather_rows");
    const std::size_t v = T.rows(), d = T.cols();
    for (std::size_t id : ids)
        if (id >= v) throw InvalidInput("gather_rows: id " + std::to_string(id) + " >= " + std::to_string(v));
    Tensor Y = Tensor::zeros({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) std::copy_n(&T.data[ids[i] * d], d, &Y.data[i * d]);
    const std::size_t it = table.id;
    std::vector<std::size_t> idv(ids.begin(), ids.end());
    return table.tape->record(std::move(Y), {table}, [it, d, idv = std::move(idv)](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& gt = t.grad_mut(it);
        for (std::size_t i = 0; i < idv.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) gt[idv[i] * d + j] += g[i * d + j];
    });
}

namespace {

void check_segments(std::span<const std::size_t> segments, std::size_t rows, std::size_t n, const char* op) {
    if (segments.size() != rows)
        throw InvalidShape(std::string(op) + ": " + std::to_string(segments.size()) + " segment ids for " +
                           std::to_string(rows) + " rows");
    for (std::size_t s : segments)
        if (s >= n) throw InvalidInput(std::string(op) + ": segment id " + std::to_string(s) + " >= " + std::to_string(n));
}

Var segment_reduce(Var values, std::span<const std::size_t> segments, std::size_t n, bool mean) {
    const Tensor& V = values.value();
    const char* op = mean ? "segment_mean" : "segment_sum";
    if (V.rank() == 0) throw InvalidShape(std::string(op) + ": empty tensor");
    const std::size_t e = V.rows(), d = V.cols();
    check_segments(segments, e, n, op);

    std::vector<double> inv(n, 1.0);
    if (mean) {
        std::vector<std::size_t> count(n, 0);
        for (std::size_t s : segments) ++count[s];
        for (std::size_t i = 0; i < n; ++i) inv[i] = count[i] ? 1.0 / static_cast<double>(count[i]) : 0.0;
    }
    Tensor Y = Tensor::zeros({n, d});
    for (std::size_t r = 0; r < e; ++r)
        for (std::size_t j = 0; j < d; ++j) Y.data[segments[r] * d + j] += V.data[r * d + j];
    if (mean)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) Y.data[i * d + j] *= inv[i];

    const std::size_t iv = values.id;
    std::vector<std::size_t> seg(segments.begin(), segments.end());
    return values.tape->record(std::move(Y), {values},
                               [iv, d, seg = std::move(seg), inv = std::move(inv)](Tape& t, std::size_t self) {
                                   const auto& g = t.grad(self);
                                   auto& gv = t.grad_mut(iv);
                                   for (std::size_t r = 0; r < seg.size(); ++r)
                                       for (std::size_t j = 0; j < d; ++j)
                                           gv[r * d + j] += inv[seg[r]] * g[seg[r] * d + j];
                               });
}

} // namespace

Var segment_sum(Var values, std::span<const std::size_t> segments, std::size_t n) {
    return segment_reduce(values, segments, n, false);
}

Var segment_mean(Var values, std::span<const std::size_t> segments, std::size_t n) {
    return segment_reduce(values, segments, n, true);
}

Var segment_softmax(Var scores, std::span<const std::size_t> segments, std::size_t n) {
    const Tensor& S = scores.value();
    const std::size_t e = S.rows(), h = S.cols();
    check_segments(segments, e, n, "segment_softmax");

    std::vector<double> mx(n * h, -std::numeric_limits<double>::infinity());
    for (std::size_t r = 0; r < e; ++r)
        for (std::size_t c = 0; c < h; ++c) mx[segments[r] * h + c] = std::max(mx[segments[r] * h + c], S.data[r * h + c]);
    Tensor Y = S;
    std::vector<double> denom(n * h, 0.0);
    for (std::size_t r = 0; r < e; ++r)
        for (std::size_t c = 0; c < h; ++c) {
            const double ex = std::exp(S.data[r * h + c] - mx[segments[r] * h + c]);
            Y.data[r * h + c] = ex;
            denom[segments[r] * h + c] += ex;
        }
    for (std::size_t r = 0; r < e; ++r)
        for (std::size_t c = 0; c < h; ++c) Y.data[r * h + c] /= denom[segments[r] * h + c];

    const std::size_t is = scores.id;
    std::vector<std::size_t> seg(segments.begin(), segments.end());
    return scores.tape->record(std::move(Y), {scores}, [is, n, h, seg = std::move(seg)](Tape& t, std::size_t self) {
        // dL/ds_r = y_r (g_r - sum_{r' in seg} g_r' y_r')
        const auto& g = t.grad(self);
        const auto& Yv = t.value(self).data;
        std::vector<double> dot(n * h, 0.0);
        for (std::size_t r = 0; r < seg.size(); ++r)
            for (std::size_t c = 0; c < h; ++c) dot[seg[r] * h + c] += g[r * h + c] * Yv[r * h + c];
        auto& gs = t.grad_mut(is);
        for (std::size_t r = 0; r < seg.size(); ++r)
            for (std::size_t c = 0; c < h; ++c)
                gs[r * h + c] += Yv[r * h + c] * (g[r * h + c] - dot[seg[r] * h + c]);
    });
}

Var head_dot(Var a, Var b, std::size_t heads) {
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_rank2(A, "head_dot");
    if (A.shape != B.shape) throw InvalidShape("head_dot: " + shape_string(A.shape) + " vs " + shape_string(B.shape));
    if (heads == 0 || A.cols() % heads != 0) throw InvalidShape("head_dot: width not divisible by head count");
    const std::size_t e = A.rows(), w = A.cols(), dh = w / heads;
    Tensor Y = Tensor::zeros({e, heads});
    for (std::size_t r = 0; r < e; ++r)
        for (std::size_t hh = 0; hh < heads; ++hh) {
            double acc = 0.0;
            for (std::size_t j = 0; j < dh; ++j) acc += A.data[r * w + hh * dh + j] * B.data[r * w + hh * dh + j];
            Y.data[r * heads + hh] = acc;
        }
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(Y), {a, b}, [ia, ib, e, w, heads, dh](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& Av = t.value(ia).data;
        const auto& Bv = t.value(ib).data;
        if (t.requires_grad(ia)) {
            auto& ga = t.grad_mut(ia);
            for (std::size_t r = 0; r < e; ++r)
                for (std::size_t hh = 0; hh < heads; ++hh)
                    for (std::size_t j = 0; j < dh; ++j) ga[r * w + hh * dh + j] += g[r * heads + hh] * Bv[r * w + hh * dh + j];
        }
        if (t.requires_grad(ib)) {
            auto& gb = t.grad_mut(ib);
            for (std::size_t r = 0; r < e; ++r)
                for (std::size_t hh = 0; hh < heads; ++hh)
                    for (std::size_t j = 0; j < dh; ++j) gb[r * w + hh * dh + j] += g[r * heads + hh] * Av[r * w + hh * dh + j];
        }
    });
}

Var head_scale(Var w, Var v) {
    const Tensor& W = w.value();
    const Tensor& V = v.value();
    require_rank2(V, "head_scale");
    const std::size_t e = V.rows(), width = V.cols();
    const std::size_t heads = W.cols();
    if (W.rows() != e || heads == 0 || width % heads != 0)
        throw InvalidShape("head_scale: weights " + shape_string(W.shape) + " for values " + shape_string(V.shape));
    const std::size_t dh = width / heads;
    Tensor Y = V;
    for (std::size_t r = 0; r < e; ++r)
        for (std::size_t hh = 0; hh < heads; ++hh)
            for (std::size_t j = 0; j < dh; ++j) Y.data[r * width + hh * dh + j] *= W.data[r * heads + hh];
    const std::size_t iw = w.id, iv = v.id;
    return w.tape->record(std::move(Y), {w, v}, [iw, iv, e, width, heads, dh](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& Wv = t.value(iw).data;
        const auto& Vv = t.value(iv).data;
        if (t.requires_grad(iw)) {
            auto& gw = t.grad_mut(iw);
            for (std::size_t r = 0; r < e; ++r)
                for (std::size_t hh = 0; hh < heads; ++hh) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < dh; ++j) acc += g[r * width + hh * dh + j] * Vv[r * width + hh * dh + j];
                    gw[r * heads + hh] += acc;
                }
        }
        if (t.requires_grad(iv)) {
            auto& gv = t.grad_mut(iv);
            for (std::size_t r = 0; r < e; ++r)
                for (std::size_t hh = 0; hh < heads; ++hh)
                    for (std::size_t j = 0; j < dh; ++j)
                        gv[r * width + hh * dh + j] += g[r * width + hh * dh + j] * Wv[r * heads + hh];
        }
    });
}

Var sum(Var x) {
    const Tensor& X = x.value();
    double acc = 0.0;
    for (double v : X.data) acc += v;
    const std::size_t ix = x.id;
    return x.tape->record(Tensor({1}, {acc}), {x}, [ix](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        auto& gx = t.grad_mut(ix);
        for (double& v : gx) v += g;
    });
}

Var mse_loss(Var pred, Var target) {
    const Tensor& P = pred.value();
    const Tensor& T = target.value();
    if (!vector_like(P) || !vector_like(T) || P.numel() != T.numel())
        throw InvalidShape("mse_loss: " + shape_string(P.shape) + " vs " + shape_string(T.shape));
    const std::size_t n = P.numel();
    if (n == 0) throw InvalidInput("mse_loss over zero elements");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = P.data[i] - T.data[i];
        acc += d * d;
    }
    const std::size_t ip = pred.id, it = target.id;
    return pred.tape->record(Tensor({1}, {acc / static_cast<double>(n)}), {pred, target},
                             [ip, it, n](Tape& t, std::size_t self) {
                                 const double g = t.grad(self)[0];
                                 const auto& Pv = t.value(ip).data;
                                 const auto& Tv = t.value(it).data;
                                 const double c = 2.0 * g / static_cast<double>(n);
                                 if (t.requires_grad(ip)) {
                                     auto& gp = t.grad_mut(ip);
                                     for (std::size_t i = 0; i < n; ++i) gp[i] += c * (Pv[i] - Tv[i]);
                                 }
                                 if (t.requires_grad(it)) {
                                     auto& gt = t.grad_mut(it);
                                     for (std::size_t i = 0; i < n; ++i) gt[i] -= c * (Pv[i] - Tv[i]);
                                 }
                             });
}

// ---- BoundParams -------------------------------------------------------------

BoundParams::BoundParams(Tape& tape, const ParamSet& params) : tape_(&tape) {
    for (const auto& [name, t] : params) vars_.emplace(name, tape.leaf(t, true));
}

Var BoundParams::operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw InvalidInput("unknown parameter '" + name + "'");
    return it->second;
}

ParamSet BoundParams::gradients() const {
    ParamSet out;
    for (const auto& [name, v] : vars_) {
        const Tensor& value = v.value();
        std::vector<double> g = tape_->grad(v.id);
        if (g.size() != value.numel()) g.assign(value.numel(), 0.0);
        out.emplace(name, Tensor(value.shape, std::move(g)));
    }
    return out;
}

} // namespace pdval
