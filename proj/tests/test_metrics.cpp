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
#include "pdval/metrics.hpp"
#include "pdval/rng.hpp"

#include <cmath>

using namespace pdval;

namespace {

double mape_direct(const std::vector<double>& a, const std::vector<double>& p) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - p[i]) / a[i];
    return s / static_cast<double>(a.size());
}

/// Dense evaluation of the Moran statistic.
double moran_direct(const std::vector<double>& x, const std::vector<std::vector<double>>& w) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double s0 = 0.0, num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        den += (x[i] - mean) * (x[i] - mean);
        for (std::size_t j = 0; j < x.size(); ++j) {
            s0 += w[i][j];
            num += w[i][j] * (x[i] - mean) * (x[j] - mean);
        }
    }
    return n / s0 * num / den;
}

std::vector<std::vector<double>> dense(const SpatialWeights& sw) {
    std::vector<std::vector<double>> d(sw.size(), std::vector<double>(sw.size(), 0.0));
    for (std::size_t i = 0; i < sw.size(); ++i)
        for (auto [j, w] : sw.rows[i]) d[i][j] += w;
    return d;
}

SpatialWeights rook_lattice(std::size_t side) {
    SpatialWeights w;
    w.rows.resize(side * side);
    for (std::size_t r = 0; r < side; ++r)
        for (std::size_t c = 0; c < side; ++c) {
            auto& row = w.rows[r * side + c];
            if (r > 0) row.emplace_back((r - 1) * side + c, 1.0);
            if (r + 1 < side) row.emplace_back((r + 1) * side + c, 1.0);
            if (c > 0) row.emplace_back(r * side + c - 1, 1.0);
            if (c + 1 < side) row.emplace_back(r * side + c + 1, 1.0);
        }
    w.row_normalize();
    return w;
}

std::vector<GeoPoint> lattice_points(std::size_t side) {
    std::vector<GeoPoint> pts;
    for (std::size_t r = 0; r < side; ++r)
        for (std::size_t c = 0; c < side; ++c) pts.push_back({0.01 * static_cast<double>(r), 0.01 * static_cast<double>(c)});
    return pts;
}

} // namespace

TEST_CASE("mape") {
    const std::vector<double> a{100, 200}, p{110, 180};
    CHECK(std::abs(mape(a, p) - 0.10) < 1e-15);
    CHECK(mape(a, a) == 0.0);
    Rng rng(1);
    std::vector<double> x(500), y(500);
    for (std::size_t i = 0; i < 500; ++i) {
        x[i] = rng.uniform(1, 100);
        y[i] = rng.uniform(1, 100);
    }
    CHECK(std::abs(mape(x, y) - mape_direct(x, y)) < 1e-12);
    const std::vector<double> bad{100, 0};
    CHECK_THROWS_AS(mape(bad, p), InvalidInput);
    const std::vector<double> one{1};
    CHECK_THROWS_AS(mape(a, one), InvalidInput);
    const std::vector<double> nan{NAN, 1};
    CHECK_THROWS_AS(mape(a, nan), NonFinite);
}

TEST_CASE("rmse and r2") {
    const std::vector<double> a{1, 2, 3, 4};
    CHECK(rmse(a, a) == 0.0);
    CHECK(r2(a, a) == 1.0);
    const std::vector<double> mean(4, 2.5);
    CHECK(std::abs(r2(a, mean)) < 1e-15);
    const std::vector<double> p{2, 2, 2, 2};
    CHECK(std::abs(rmse(a, p) - std::sqrt(6.0 / 4.0)) < 1e-15);
    CHECK(std::abs(r2(a, p) - (1.0 - 6.0 / 5.0)) < 1e-15);

    Rng rng(2);
    std::vector<double> x(300), y(300);
    double sx = 0.0;
    for (std::size_t i = 0; i < 300; ++i) {
        x[i] = rng.normal();
        y[i] = x[i] + 0.3 * rng.normal();
        sx += x[i];
    }
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < 300; ++i) {
        ss_res += (x[i] - y[i]) * (x[i] - y[i]);
        ss_tot += (x[i] - sx / 300) * (x[i] - sx / 300);
    }
    CHECK(std::abs(rmse(x, y) - std::sqrt(ss_res / 300)) < 1e-12);
    CHECK(std::abs(r2(x, y) - (1 - ss_res / ss_tot)) < 1e-12);

    const std::vector<double> flat{5, 5, 5, 5};
    CHECK_THROWS_AS(r2(flat, a), DegenerateVariance);
}

TEST_CASE("alternating 4-cycle") {
    SpatialWeights w;
    w.rows = {{{1, 1.0}, {3, 1.0}}, {{0, 1.0}, {2, 1.0}}, {{1, 1.0}, {3, 1.0}}, {{2, 1.0}, {0, 1.0}}};
    w.row_normalize();
    const std::vector<double> x{1, -1, 1, -1};
    const auto res = morans_i(x, w, 0, 0);
    CHECK(std::abs(res.i + 1.0) < 1e-12);
    CHECK(std::abs(moran_direct(x, dense(w)) + 1.0) < 1e-12);
    CHECK(res.p_value == 1.0);
}

TEST_CASE("lattice ramp is strongly autocorrelated") {
    std::vector<double> ramp;
    for (std::size_t r = 0; r < 10; ++r)
        for (std::size_t c = 0; c < 10; ++c) ramp.push_back(static_cast<double>(r + c));
    const auto rook = rook_lattice(10);
    const auto a = morans_i(ramp, rook, 99, 1);
    CHECK(a.i > 0.8);
    CHECK(std::abs(a.i - moran_direct(ramp, dense(rook))) < 1e-12);
    CHECK(a.p_value == doctest::Approx(0.01));

    const auto pts = lattice_points(10);
    const auto knn = knn_weights(pts, 4);
    const auto b = morans_i(ramp, knn, 0, 1);
    CHECK(b.i > 0.8);
    CHECK(std::abs(b.i - moran_direct(ramp, dense(knn))) < 1e-12);
}

TEST_CASE("knn weights") {
    const auto pts = lattice_points(5);
    const auto w = knn_weights(pts, 3);
    REQUIRE(w.size() == 25);
    for (std::size_t i = 0; i < 25; ++i) {
        CHECK(w.rows[i].size() == 3);
        double s = 0.0;
        for (auto [j, v] : w.rows[i]) {
            CHECK(j != i);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-15);
    }
    CHECK(std::abs(w.total() - 25.0) < 1e-12);
    CHECK_THROWS_AS(knn_weights(std::span(pts).first(3), 3), InvalidInput);
}

TEST_CASE("noise has no significant autocorrelation") {
    Rng place(3);
    std::vector<GeoPoint> pts;
    for (int i = 0; i < 300; ++i) pts.push_back({-33.5 + place.uniform(-0.1, 0.1), -70.6 + place.uniform(-0.1, 0.1)});
    const auto w = knn_weights(pts, 8);
    int quiet = 0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(1000 + seed);
        std::vector<double> x(300);
        for (auto& v : x) v = rng.normal();
        const auto r = morans_i(x, w, 999, seed);
        CHECK(std::abs(r.i - moran_direct(x, dense(w))) < 1e-12);
        CHECK(r.p_value > 0.0);
        CHECK(r.p_value <= 1.0);
        quiet += r.p_value > 0.05;
    }
    CHECK(quiet >= 18);
}

TEST_CASE("moran is affine invariant") {
    Rng rng(4);
    std::vector<GeoPoint> pts;
    std::vector<double> x;
    for (int i = 0; i < 200; ++i) {
        pts.push_back({-33.5 + rng.uniform(-0.1, 0.1), -70.6 + rng.uniform(-0.1, 0.1)});
        x.push_back(pts.back().lat * 10 + rng.normal());
    }
    const auto w = knn_weights(pts, 8);
    const auto base = morans_i(x, w, 199, 9);
    for (auto [a, b] : {std::pair{2.0, 0.0}, {-3.5, 100.0}, {1e-3, -7.0}, {250.0, 1e4}}) {
        std::vector<double> y;
        for (double v : x) y.push_back(a * v + b);
        const auto r = morans_i(y, w, 199, 9);
        CHECK(std::abs(r.i - base.i) < 1e-12);
        if (a > 0) CHECK(r.p_value == base.p_value);
    }
}

TEST_CASE("moran errors and determinism") {
    const auto pts = lattice_points(4);
    const auto w = knn_weights(pts, 3);
    const std::vector<double> flat(16, 2.0);
    CHECK_THROWS_AS(morans_i(flat, w, 9, 0), DegenerateVariance);
    const std::vector<double> two{1, 2};
    CHECK_THROWS_AS(morans_i(two, w, 9, 0), InvalidInput);
    std::vector<double> x(16);
    for (std::size_t i = 0; i < 16; ++i) x[i] = std::sin(static_cast<double>(i));
    const auto a = morans_i(x, w, 99, 5), b = morans_i(x, w, 99, 5);
    CHECK(a.i == b.i);
    CHECK(a.p_value == b.p_value);
    CHECK(a.permutations == 99);
}
