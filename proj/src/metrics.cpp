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

#include "pdval/metrics.hpp"

#include "pdval/errors.hpp"
#include "pdval/rng.hpp"

#include <cmath>
#include <string>

namespace pdval {

namespace {

void check_pair(std::span<const double> actual, std::span<const double> pred) {
    if (actual.size() != pred.size())
        throw InvalidInput("metric inputs differ in length: " + std::to_string(actual.size()) + " vs " +
                           std::to_string(pred.size()));
    if (actual.empty()) throw InvalidInput("metric of an empty sample");
    for (std::size_t i = 0; i < actual.size(); ++i)
        if (!std::isfinite(actual[i]) || !std::isfinite(pred[i])) throw NonFinite("non-finite value in metric input");
}

double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

} // namespace

double mape(std::span<const double> actual, std::span<const double> pred) {
    check_pair(actual, pred);
    double s = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (!(actual[i] > 0.0)) throw InvalidInput("MAPE needs positive actual values");
        s += std::abs(actual[i] - pred[i]) / actual[i];
    }
    return s / static_cast<double>(actual.size());
}

double rmse(std::span<const double> actual, std::span<const double> pred) {
    check_pair(actual, pred);
    double s = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) s += (actual[i] - pred[i]) * (actual[i] - pred[i]);
    return std::sqrt(s / static_cast<double>(actual.size()));
}

double r2(std::span<const double> actual, std::span<const double> pred) {
    check_pair(actual, pred);
    const double m = mean(actual);
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        ss_res += (actual[i] - pred[i]) * (actual[i] - pred[i]);
        ss_tot += (actual[i] - m) * (actual[i] - m);
    }
    if (!(ss_tot > 0.0)) throw DegenerateVariance("R^2 undefined for a constant target");
    return 1.0 - ss_res / ss_tot;
}

double SpatialWeights::total() const {
    double s = 0.0;
    for (const auto& row : rows)
        for (const auto& [j, w] : row) s += w;
    return s;
}

void SpatialWeights::row_normalize() {
    for (auto& row : rows) {
        double s = 0.0;
        for (const auto& [j, w] : row) s += w;
        if (s == 0.0) continue;
        for (auto& [j, w] : row) w /= s;
    }
}

SpatialWeights knn_weights(std::span<const GeoPoint> points, std::size_t k) {
    if (k == 0) throw InvalidInput("kNN weights need k >= 1");
    if (points.size() <= k) throw InvalidInput("kNN weights need more than k points");
    const auto nn = geo_knn(points, k);
    SpatialWeights w;
    w.rows.resize(points.size());
    for (std::size_t i = 0; i < nn.size(); ++i)
        for (std::size_t j : nn[i]) w.rows[i].emplace_back(j, 1.0);
    w.row_normalize();
    return w;
}

namespace {

double cross_product(std::span<const double> z, const SpatialWeights& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.rows.size(); ++i) {
        double acc = 0.0;
        for (const auto& [j, wij] : w.rows[i]) acc += wij * z[j];
        s += z[i] * acc;
    }
    return s;
}

} // namespace

MoranResult morans_i(std::span<const double> values, const SpatialWeights& weights, std::size_t permutations,
                     std::uint64_t seed) {
    const std::size_t n = values.size();
    if (n < 3) throw InvalidInput("Moran's I needs at least 3 values");
    if (weights.size() != n) throw InvalidInput("weights and values differ in size");
    for (const auto& row : weights.rows)
        for (const auto& [j, w] : row) {
            if (j >= n) throw InvalidInput("weight index out of range");
            if (!std::isfinite(w)) throw NonFinite("non-finite spatial weight");
        }
    for (double v : values)
        if (!std::isfinite(v)) throw NonFinite("non-finite value in Moran's I input");

    const double m = mean(values);
    std::vector<double> z(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        z[i] = values[i] - m;
        ss += z[i] * z[i];
    }
    const double s0 = weights.total();
    if (!(s0 > 0.0)) throw InvalidInput("spatial weights sum to zero");
    // Rounding can leave a tiny nonzero ss for constant input.
    double scale = 0.0;
    for (double v : values) scale = std::max(scale, std::abs(v));
    if (!(ss > 1e-24 * static_cast<double>(n) * scale * scale) || ss == 0.0)
        throw DegenerateVariance("Moran's I undefined for constant values");

    const double factor = static_cast<double>(n) / (s0 * ss);
    MoranResult r;
    r.i = factor * cross_product(z, weights);
    r.permutations = permutations;

    std::size_t at_least = 0;
    Rng rng(seed);
    std::vector<double> perm = z;
    for (std::size_t p = 0; p < permutations; ++p) {
        rng.shuffle(std::span<double>(perm));
        if (factor * cross_product(perm, weights) >= r.i) ++at_least;
    }
    r.p_value = static_cast<double>(1 + at_least) / static_cast<double>(permutations + 1);
    return r;
}

} // namespace pdval
