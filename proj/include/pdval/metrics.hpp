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

#include "pdval/geo.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace pdval {

/// Mean absolute percentage error. Every actual value must be > 0.
double mape(std::span<const double> actual, std::span<const double> pred);
double rmse(std::span<const double> actual, std::span<const double> pred);
/// 1 - SS_res / SS_tot. Throws DegenerateVariance when actual is constant.
double r2(std::span<const double> actual, std::span<const double> pred);

/// Sparse spatial weights: row i lists (j, w_ij).
struct SpatialWeights {
    std::vector<std::vector<std::pair<std::size_t, double>>> rows;

    std::size_t size() const noexcept { return rows.size(); }
    double total() const;
    /// Divides each nonempty row by its sum.
    void row_normalize();
};

/// k nearest geographic neighbors of every point, row-normalized.
SpatialWeights knn_weights(std::span<const GeoPoint> points, std::size_t k);

struct MoranResult {
    double i = 0.0;
    double p_value = 1.0;
    std::size_t permutations = 0;
};

/// Global Moran's I with a one-sided permutation p-value
/// (1 + #{I_perm >= I}) / (permutations + 1). permutations == 0 gives p = 1.
MoranResult morans_i(std::span<const double> values, const SpatialWeights& weights, std::size_t permutations,
                     std::uint64_t seed);

} // namespace pdval
