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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "pdval/autodiff.hpp"
#include "pdval/errors.hpp"
#include "pdval/rng.hpp"
#include "support/oracles.hpp"

#include <cmath>

using namespace pdval;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    std::vector<double> d(n);
    for (auto& x : d) x = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(d));
}

/// Linear probe so that every output entry gets its own weight in the loss.
Var probe(Var out, std::uint64_t seed) {
    Rng rng(seed);
    Tape& t = *out.tape;
    const std::size_t rows = out.value().rows(), cols = out.value().cols();
    const Var p = t.leaf(random_tensor({cols, 1}, rng));
    const Var w = t.leaf(random_tensor({1, rows}, rng));
    return sum(matmul(w, matmul(out, p)));
}

void expect_grads(const ParamSet& params, const std::function<Var(Tape&, const BoundParams&)>& f, double tol = 1e-6) {
    const auto gc = oracle::grad_check(params, f);
    INFO("worst " << gc.worst_name << " rel " << gc.worst_rel);
    CHECK(gc.checked > 0);
    CHECK(gc.worst_rel < tol);
}

} // namespace

TEST_CASE("tensor construction") {
    CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), InvalidShape);
    CHECK_THROWS_AS(Tensor({}, {}), InvalidShape);
    CHECK_THROWS_AS(Tensor({1, 1, 1}, {1}), InvalidShape);
    const auto t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(t.at(1, 2) == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(Tensor::vector({1, 2}).cols() == 1);
}

TEST_CASE("matmul: identity and arithmetic") {
    Tape t;
    const Var i3 = t.leaf(Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    const Var x = t.leaf(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
    const Tensor prod = matmul(i3, x).value();
    CHECK(prod == x.value());
    const Var a = t.leaf(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    const Var ones = t.leaf(Tensor::matrix(2, 1, {1, 1}));
    CHECK(matmul(a, ones).value().data == std::vector<double>{3, 7});
    CHECK_THROWS_AS(matmul(a, x), InvalidShape);
}

TEST_CASE("matmul gradient") {
    Rng rng(1);
    ParamSet p{{"a", random_tensor({3, 4}, rng)}, {"b", random_tensor({4, 2}, rng)}};
    expect_grads(p, [](Tape&, const BoundParams& b) { return sum(matmul(b["a"], b["b"])); });
    expect_grads(p, [](Tape&, const BoundParams& b) { return probe(matmul(b["a"], b["b"]), 3); });
}

TEST_CASE("relu, add, scale, concat") {
    Tape t;
    const Var x = t.leaf(Tensor::vector({-1, 0, 2}));
    CHECK(relu(x).value().data == std::vector<double>{0, 0, 2});
    const Var a = t.leaf(Tensor::matrix(2, 1, {1, 2}));
    const Var b = t.leaf(Tensor::matrix(2, 2, {3, 4, 5, 6}));
    const Var c = concat_rows(a, b);
    CHECK(c.value().shape == std::vector<std::size_t>{2, 3});
    CHECK(c.value().data == std::vector<double>{1, 3, 4, 2, 5, 6});
    CHECK(scale(b, 2.0).value().data == std::vector<double>{6, 8, 10, 12});
    CHECK(add(b, b).value().data == std::vector<double>{6, 8, 10, 12});
    CHECK_THROWS_AS(add(a, b), InvalidShape);
    CHECK_THROWS_AS(concat_rows(a, t.leaf(Tensor::matrix(1, 1, {1}))), InvalidShape);
}

TEST_CASE("relu subgradient at zero is zero") {
    Tape t;
    const Var x = t.leaf(Tensor::vector({-1, 0, 2}), true);
    t.backward(sum(relu(x)));
    CHECK(x.grad() == std::vector<double>{0, 0, 1});
}

TEST_CASE("elementwise gradients") {
    Rng rng(2);
    // keep relu inputs away from zero
    Tensor x = random_tensor({4, 3}, rng);
    for (auto& v : x.data) v = v < 0 ? v - 0.1 : v + 0.1;
    ParamSet p{{"x", x}, {"y", random_tensor({4, 3}, rng)}, {"z", random_tensor({4, 2}, rng)},
               {"bias", random_tensor({3}, rng)}};
    expect_grads(p, [](Tape&, const BoundParams& b) { return probe(relu(b["x"]), 1); });
    expect_grads(p, [](Tape&, const BoundParams& b) { return probe(add(b["x"], b["y"]), 2); });
    expect_grads(p, [](Tape&, const BoundParams& b) { return probe(scale(b["x"], -1.7), 3); });
    expect_grads(p, [](Tape&, const BoundParams& b) { return probe(concat_rows(b["x"], b["z"]), 4); });
    expect_grads(p, [](Tape&, const BoundParams& b) { return probe(add_bias(b["x"], b["bias"]), 5); });
}

TEST_CASE("segment_mean") {
    Tape t;
    const Var v = t.leaf(Tensor::matrix(2, 2, {2, 2, 4, 4}));
    const std::vector<std::size_t> seg0{0, 0};
    CHECK(segment_mean(v, seg0, 1).value().data == std::vector<double>{3, 3});
    const std::vector<std::size_t> perm{1, 0};
    CHECK(segment_mean(v, perm, 2).value().data == std::vector<double>{4, 4, 2, 2});
    const std::vector<std::size_t> gap{0, 2};
    CHECK(segment_mean(v, gap, 3).value().data == std::vector<double>{2, 2, 0, 0, 4, 4});
    const std::vector<std::size_t> bad{0, 5};
    CHECK_THROWS_AS(segment_mean(v, bad, 3), InvalidInput);
}

TEST_CASE("segment_sum and segment_mean gradients") {
    Rng rng(3);
    ParamSet p{{"v", random_tensor({7, 3}, rng)}};
    static const std::vector<std::size_t> seg{0, 2, 2, 1, 0, 2, 4};
    expect_grads(p, [](Tape&, const BoundParams& b) { return probe(segment_mean(b["v"], seg, 5), 7); });
    expect_grads(p, [](Tape&, const BoundParams& b) { return probe(segment_sum(b["v"], seg, 5), 8); });

    // 1/count scatter
    Tape t;
    BoundParams bp(t, p);
    t.backward(sum(segment_mean(bp["v"], seg, 5)));
    const auto& g = bp["v"].grad();
    CHECK(g[0] == doctest::Approx(0.5));
    CHECK(g[3] == doctest::Approx(1.0 / 3.0));
    CHECK(g[9] == doctest::Approx(1.0));
}

TEST_CASE("segment_softmax values") {
    Tape t;
    const std::vector<std::size_t> one{0};
    CHECK(segment_softmax(t.leaf(Tensor::vector({3.7})), one, 1).value().data[0] == 1.0);
    const std::vector<std::size_t> two{0, 0};
    const auto eq = segment_softmax(t.leaf(Tensor::vector({0.4, 0.4})), two, 1).value().data;
    CHECK(eq[0] == 0.5);
    CHECK(eq[1] == 0.5);
    const std::vector<std::size_t> three{0, 0, 0};
    const auto s = segment_softmax(t.leaf(Tensor::vector({1, 2, 3})), three, 1).value().data;
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(s[i] - std::exp(i + 1.0) / z) < 1e-12);
}

TEST_CASE("segment_softmax normalization is stable for large scores") {
    Rng rng(4);
    const std::size_t e = 200, n = 17, h = 3;
    std::vector<std::size_t> seg(e);
    for (auto& s : seg) s = rng.below(n);
    Tape t;
    const auto out = segment_softmax(t.leaf(random_tensor({e, h}, rng, -1000, 1000)), seg, n).value();
    std::vector<double> sums(n * h, 0.0);
    std::vector<int> used(n, 0);
    for (std::size_t i = 0; i < e; ++i) {
        used[seg[i]] = 1;
        for (std::size_t c = 0; c < h; ++c) {
            CHECK(out.at(i, c) > 0.0 - 1e-300);
            CHECK(out.at(i, c) <= 1.0);
            sums[seg[i] * h + c] += out.at(i, c);
        }
    }
    for (std::size_t s = 0; s < n; ++s)
        if (used[s])
            for (std::size_t c = 0; c < h; ++c) CHECK(std::abs(sums[s * h + c] - 1.0) < 1e-12);
}

TEST_CASE("segment_softmax gradient") {
    Rng rng(5);
    ParamSet p{{"s", random_tensor({9, 2}, rng, -2, 2)}, {"v", random_tensor({9}, rng, -2, 2)}};
    static const std::vector<std::size_t> seg{0, 1, 0, 2, 2, 2, 1, 0, 3};
    expect_grads(p, [](Tape&, const BoundParams& b) { return probe(segment_softmax(b["s"], seg, 4), 9); });
    expect_grads(p, [](Tape& t, const BoundParams& b) {
        Rng r(10);
        const Var target = t.leaf(random_tensor({9}, r));
        return mse_loss(segment_softmax(b["v"], seg, 4), target);
    });
}

TEST_CASE("gather_rows") {
    Tape t;
    const Var table = t.leaf(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}), true);
    const std::vector<std::size_t> rev{2, 1, 0};
    CHECK(gather_rows(table, rev).value().data == std::vector<double>{5, 6, 3, 4, 1, 2});
    const std::vector<std::size_t> twice{0, 0};
    const Var g = gather_rows(table, twice);
    CHECK(g.value().data == std::vector<double>{1, 2, 1, 2});
    t.backward(sum(g));
    CHECK(table.grad() == std::vector<double>{2, 2, 0, 0, 0, 0});
    const std::vector<std::size_t> bad{3};
    CHECK_THROWS_AS(gather_rows(table, bad), InvalidInput);
}

TEST_CASE("gather_rows gradient") {
    Rng rng(6);
    ParamSet p{{"t", random_tensor({4, 3}, rng)}};
    static const std::vector<std::size_t> ids{3, 0, 0, 2, 3, 3};
    expect_grads(p, [](Tape&, const BoundParams& b) { return probe(gather_rows(b["t"], ids), 11); });
}

TEST_CASE("head_dot and head_scale") {
    Tape t;
    const Var a = t.leaf(Tensor::matrix(1, 4, {1, 2, 3, 4}));
    const Var b = t.leaf(Tensor::matrix(1, 4, {1, 1, 2, 2}));
    CHECK(head_dot(a, b, 2).value().data == std::vector<double>{3, 14});
    CHECK(head_dot(a, b, 1).value().data == std::vector<double>{17});
    CHECK_THROWS_AS(head_dot(a, b, 3), InvalidShape);
    const Var w = t.leaf(Tensor::matrix(1, 2, {2, -1}));
    CHECK(head_scale(w, a).value().data == std::vector<double>{2, 4, -3, -4});

    Rng rng(7);
    ParamSet p{{"a", random_tensor({5, 6}, rng)}, {"b", random_tensor({5, 6}, rng)}, {"w", random_tensor({5, 3}, rng)}};
    expect_grads(p, [](Tape&, const BoundParams& bp) { return probe(head_dot(bp["a"], bp["b"], 3), 12); });
    expect_grads(p, [](Tape&, const BoundParams& bp) { return probe(head_scale(bp["w"], bp["a"]), 13); });
}

TEST_CASE("mse_loss") {
    Tape t;
    const Var p = t.leaf(Tensor::vector({1, 2}));
    CHECK(mse_loss(p, p).value().data[0] == 0.0);
    CHECK(mse_loss(t.leaf(Tensor::vector({3})), t.leaf(Tensor::vector({1}))).value().data[0] == 4.0);
    CHECK_THROWS_AS(mse_loss(p, t.leaf(Tensor::vector({1}))), InvalidShape);

    Rng rng(8);
    ParamSet ps{{"p", random_tensor({6, 1}, rng)}};
    const auto gc = oracle::grad_check(ps, [](Tape& tp, const BoundParams& b) {
        Rng r(9);
        return mse_loss(b["p"], tp.leaf(random_tensor({6, 1}, r)));
    });
    CHECK(gc.worst_rel < 1e-8);

    // analytic form (2/n)(pred - target)
    Tape t2;
    const Var pr = t2.leaf(Tensor::vector({1, 4}), true);
    t2.backward(mse_loss(pr, t2.leaf(Tensor::vector({0, 1}))));
    CHECK(pr.grad() == std::vector<double>{1, 3});
}

TEST_CASE("backward contract") {
    Tape t;
    const Var x = t.leaf(Tensor::vector({1, 2}), true);
    CHECK_THROWS_AS(t.backward(scale(x, 2.0)), ContractError);
    Tape other;
    CHECK_THROWS_AS(other.backward(sum(x)), ContractError);
    CHECK_THROWS_AS(add(x, other.leaf(Tensor::vector({1, 2}))), ContractError);
}

TEST_CASE("repeated backward accumulates on leaves") {
    Tape t;
    const Var x = t.leaf(Tensor::vector({1, 2}), true);
    const Var loss = sum(scale(x, 3.0));
    t.backward(loss);
    CHECK(x.grad() == std::vector<double>{3, 3});
    t.backward(loss);
    CHECK(x.grad() == std::vector<double>{6, 6});
    t.zero_grad();
    CHECK(x.grad() == std::vector<double>{0, 0});
}

TEST_CASE("non-finite values are caught") {
    Tape t;
    CHECK_THROWS_AS(t.leaf(Tensor::vector({NAN})), NonFinite);
    const Var big = t.leaf(Tensor::vector({1e308}));
    CHECK_THROWS_AS(scale(big, 10.0), NonFinite);
    CHECK_THROWS_AS(scale(big, INFINITY), InvalidInput);
}

TEST_CASE("forward determinism") {
    Rng rng(12);
    const Tensor a = random_tensor({20, 8}, rng), b = random_tensor({8, 8}, rng);
    auto run = [&] {
        Tape t;
        return relu(matmul(t.leaf(a), t.leaf(b))).value();
    };
    CHECK(run() == run());
}

TEST_CASE("bound parameters") {
    Tape t;
    ParamSet p{{"w", Tensor::vector({1, 2})}};
    BoundParams b(t, p);
    CHECK_THROWS_AS(b["missing"], InvalidInput);
    t.backward(sum(scale(b["w"], 2.0)));
    CHECK(b.gradients().at("w").data == std::vector<double>{2, 2});
}
