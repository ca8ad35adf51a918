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

#include "pdval/errors.hpp"
#include "pdval/models.hpp"
#include "support/oracles.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numeric>

using namespace pdval;

namespace {

constexpr ModelKind kGraphKinds[] = {ModelKind::pd_gcn, ModelKind::pd_tgcn};

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double w = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a[i] - b[i]));
    return w;
}

} // namespace

TEST_CASE("spec validation and input width") {
    ModelSpec s;
    s.continuous_dim = 3;
    s.embedding_specs = {EmbeddingSpec::for_cardinality(10), EmbeddingSpec::for_cardinality(3)};
    CHECK(s.input_dim() == 3 + 5 + 2);
    s.heads = 0;
    CHECK_THROWS_AS(s.validate(), InvalidInput);
    CHECK(parse_model_kind("pd_tgcn") == ModelKind::pd_tgcn);
    CHECK(to_string(ModelKind::linreg) == "linreg");
    CHECK_THROWS_AS(parse_model_kind("rf"), InvalidInput);
}

TEST_CASE("initialization is seeded") {
    auto f = oracle::model_fixture(ModelKind::pd_tgcn, 5, 8, 3);
    CHECK(init_params(f.spec) == init_params(f.spec));
    auto g = f.spec;
    g.seed += 1;
    CHECK(init_params(f.spec) != init_params(g));
    for (const auto& [name, t] : init_params(f.spec))
        if (name.ends_with(".b"))
            for (double v : t.data) CHECK(v == 0.0);
}

TEST_CASE("zero output weights give the bias everywhere") {
    for (auto kind : kGraphKinds) {
        auto f = oracle::model_fixture(kind, 8, 14, 4);
        auto p = init_params(f.spec);
        std::fill(p.at("out.w").data.begin(), p.at("out.w").data.end(), 0.0);
        p.at("out.b").data[0] = 0.37;
        for (double y : predict(p, f.spec, f.inputs)) CHECK(y == 0.37);
    }
}

TEST_CASE("forward equals composed layer references") {
    for (auto kind : kGraphKinds)
        for (std::uint64_t seed : {5u, 6u}) {
            auto f = oracle::model_fixture(kind, 4, 7, seed);
            const auto p = init_params(f.spec);
            CHECK(max_abs_diff(predict(p, f.spec, f.inputs), oracle::model_forward(f.spec, p, f.inputs)) < 1e-12);
        }
}

TEST_CASE("forward is bit-identical across calls") {
    for (auto kind : kGraphKinds) {
        auto f = oracle::model_fixture(kind, 30, 90, 7);
        const auto p = init_params(f.spec);
        CHECK(predict(p, f.spec, f.inputs) == predict(p, f.spec, f.inputs));
    }
}

TEST_CASE("node relabeling permutes predictions") {
    for (auto kind : kGraphKinds) {
        auto f = oracle::model_fixture(kind, 10, 30, 8);
        const auto p = init_params(f.spec);
        std::vector<std::size_t> perm(10);
        std::iota(perm.begin(), perm.end(), 0);
        Rng rng(9);
        rng.shuffle(std::span<std::size_t>(perm));
        ModelInputs g = f.inputs;
        for (std::size_t i = 0; i < 10; ++i) {
            for (std::size_t c = 0; c < 3; ++c) g.continuous.data[perm[i] * 3 + c] = f.inputs.continuous.at(i, c);
            g.categorical[0][perm[i]] = f.inputs.categorical[0][i];
        }
        for (auto& s : g.graph.src) s = perm[s];
        for (auto& d : g.graph.dst) d = perm[d];
        const auto a = predict(p, f.spec, f.inputs), b = predict(p, f.spec, g);
        for (std::size_t i = 0; i < 10; ++i) CHECK(std::abs(a[i] - b[perm[i]]) < 1e-12);
    }
}

TEST_CASE("isolated node depends only on itself") {
    for (auto kind : kGraphKinds) {
        auto f = oracle::model_fixture(kind, 12, 40, 10);
        // cut every edge touching node 0
        ModelInputs in = f.inputs;
        GraphIndex g{in.graph.n_nodes, {}, {}};
        std::vector<double> ea;
        for (std::size_t e = 0; e < in.graph.n_edges(); ++e) {
            if (in.graph.src[e] == 0 || in.graph.dst[e] == 0) continue;
            g.src.push_back(in.graph.src[e]);
            g.dst.push_back(in.graph.dst[e]);
            for (std::size_t c = 0; c < kEdgeAttrWidth; ++c) ea.push_back(in.edge_attrs.at(e, c));
        }
        in.graph = g;
        in.edge_attrs = Tensor({g.n_edges(), kEdgeAttrWidth}, ea);
        const auto p = init_params(f.spec);
        const double before = predict(p, f.spec, in)[0];
        Rng rng(11);
        for (std::size_t i = 1; i < 12; ++i) {
            for (std::size_t c = 0; c < 3; ++c) in.continuous.data[i * 3 + c] = rng.uniform(-5, 5);
            in.categorical[0][i] = rng.below(4);
        }
        for (auto& v : in.edge_attrs.data) v = rng.uniform();
        CHECK(predict(p, f.spec, in)[0] == before);
    }
}

TEST_CASE("tgcn returns normalized attention for both layers") {
    auto f = oracle::model_fixture(ModelKind::pd_tgcn, 15, 50, 12);
    const auto p = init_params(f.spec);
    Tape t;
    BoundParams b(t, p);
    const auto r = forward(t, b, f.spec, f.inputs);
    REQUIRE(r.attention.size() == 2);
    for (const auto& a : r.attention) {
        std::vector<double> sums(15 * f.spec.heads, 0.0);
        std::vector<int> deg(15, 0);
        for (std::size_t e = 0; e < f.inputs.graph.n_edges(); ++e) {
            ++deg[f.inputs.graph.dst[e]];
            for (std::size_t h = 0; h < f.spec.heads; ++h) sums[f.inputs.graph.dst[e] * f.spec.heads + h] += a.value().at(e, h);
        }
        for (std::size_t i = 0; i < 15; ++i)
            if (deg[i])
                for (std::size_t h = 0; h < f.spec.heads; ++h) CHECK(std::abs(sums[i * f.spec.heads + h] - 1) < 1e-12);
    }
}

TEST_CASE("model gradients against finite differences") {
    for (auto kind : kGraphKinds) {
        auto f = oracle::model_fixture(kind, 20, 60, 13);
        const auto p = init_params(f.spec);
        Rng rng(14);
        std::vector<double> target(20);
        for (auto& v : target) v = rng.uniform();
        const auto gc = oracle::grad_check(p, [&](Tape& t, const BoundParams& b) {
            return mse_loss(forward(t, b, f.spec, f.inputs).prediction, t.leaf(Tensor({20, 1}, target)));
        });
        INFO(to_string(kind) << " worst " << gc.worst_name << " margin " << gc.relu_margin);
        CHECK(gc.worst_rel < 1e-4);
        CHECK(gc.worst_rel_large < 1e-6);
    }
}

TEST_CASE("input shape errors") {
    auto f = oracle::model_fixture(ModelKind::pd_tgcn, 6, 10, 15);
    const auto p = init_params(f.spec);
    auto in = f.inputs;
    in.edge_attrs = Tensor({10, 2}, std::vector<double>(20, 0.0));
    CHECK_THROWS_AS(predict(p, f.spec, in), InvalidShape);
    in = f.inputs;
    in.categorical.clear();
    CHECK_THROWS_AS(predict(p, f.spec, in), InvalidShape);
    in = f.inputs;
    in.categorical[0][0] = 4;
    CHECK_THROWS_AS(predict(p, f.spec, in), InvalidInput);
}

TEST_CASE("linreg two-point line") {
    Matrix x(2, 1);
    x(0, 0) = 0;
    x(1, 0) = 1;
    const std::vector<double> y{1, 3};
    const auto w = fit_linreg(x, y);
    CHECK(std::abs(w[0] - 1) < 1e-6);
    CHECK(std::abs(w[1] - 2) < 1e-6);
}

TEST_CASE("linreg recovers an exact linear model") {
    Rng rng(16);
    Matrix x(60, 4);
    std::vector<double> y(60);
    const double truth[] = {0.5, -1.0, 2.0, 0.25, 3.0};
    for (std::size_t r = 0; r < 60; ++r) {
        y[r] = truth[0];
        for (std::size_t c = 0; c < 4; ++c) {
            x(r, c) = rng.uniform(-1, 1);
            y[r] += truth[c + 1] * x(r, c);
        }
    }
    const auto w = fit_linreg(x, y);
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(w[i] - truth[i]) < 1e-8);
    const auto pred = predict_linreg(w, x);
    CHECK(max_abs_diff(pred, y) < 1e-8);
}

TEST_CASE("linreg agrees with a QR solve") {
    Rng rng(17);
    const std::size_t n = 100, d = 5;
    Matrix x(n, d);
    Eigen::MatrixXd z(n, d + 1);
    Eigen::VectorXd ey(n);
    std::vector<double> y(n);
    for (std::size_t r = 0; r < n; ++r) {
        z(r, 0) = 1.0;
        for (std::size_t c = 0; c < d; ++c) z(r, c + 1) = x(r, c) = rng.normal();
        ey(r) = y[r] = rng.normal();
    }
    const Eigen::VectorXd ref = z.colPivHouseholderQr().solve(ey);
    const auto w = fit_linreg(x, y);
    for (std::size_t i = 0; i <= d; ++i) CHECK(std::abs(w[i] - ref(i)) < 1e-8);

    // residuals orthogonal to every column
    const auto pred = predict_linreg(w, x);
    for (std::size_t c = 0; c <= d; ++c) {
        double dot = 0.0;
        for (std::size_t r = 0; r < n; ++r) dot += z(r, c) * (y[r] - pred[r]);
        CHECK(std::abs(dot) < 1e-6);
    }
}

TEST_CASE("linreg errors") {
    Matrix x(3, 3);
    const std::vector<double> y{1, 2, 3};
    CHECK_THROWS_AS(fit_linreg(x, y), InvalidInput);
    const std::vector<double> short_y{1, 2};
    CHECK_THROWS_AS(fit_linreg(Matrix(3, 1), short_y), InvalidInput);

    // duplicated large-scale column
    Matrix dup(10, 2);
    std::vector<double> yy(10);
    for (std::size_t r = 0; r < 10; ++r) {
        dup(r, 0) = dup(r, 1) = std::ldexp(static_cast<double>(r % 4 + 1), 40);
        yy[r] = static_cast<double>(r);
    }
    CHECK_THROWS_AS(fit_linreg(dup, yy), SingularSystem);
    const std::vector<double> coef{1, 2};
    CHECK_THROWS_AS(predict_linreg(coef, dup), InvalidInput);
}
