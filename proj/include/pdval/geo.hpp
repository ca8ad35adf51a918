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

#include <cstddef>
#include <span>
#include <vector>

namespace pdval {

/// Mean Earth radius used to turn central angles into kilometers.
inline constexpr double kEarthRadiusKm = 6371.0;

/// Latitude/longitude in degrees.
struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    /// Throws InvalidInput unless both coordinates are finite and in range.
    void validate() const;

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

struct GeoMember {
    std::size_t index;
    double distance_km;
};

/// Houses strictly closer than the threshold to `center`, nearest first.
struct GeoNeighborhood {
    std::size_t center = 0;
    std::vector<GeoMember> members;
};

/// Great-circle distance in kilometers (haversine form of the central angle).
/// Exactly symmetric and exactly zero for identical points.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

struct NeighborhoodOptions {
    /// Worker threads for the row-wise scan; 0 picks hardware concurrency.
    unsigned threads = 1;
};

/// For every point i, all j != i with haversine_km(i, j) < threshold_km,
/// sorted by (distance, index). Computed row by row; the full pairwise
/// matrix is never stored.
std::vector<GeoNeighborhood> geo_neighborhoods(std::span<const GeoPoint> points, double threshold_km,
                                               const NeighborhoodOptions& options = {});

/// The k geographically nearest other points of every point, ties broken by index.
std::vector<std::vector<std::size_t>> geo_knn(std::span<const GeoPoint> points, std::size_t k);

} // namespace pdval
