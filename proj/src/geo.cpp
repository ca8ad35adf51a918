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

#include "pdval/geo.hpp"

#include "pdval/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <thread>

namespace pdval {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Row-parallel helper: fn(i) for i in [0, n), rows split in contiguous blocks.
template <typename Fn>
void for_each_row(std::size_t n, unsigned threads, Fn&& fn) {
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    if (threads <= 1 || n < 256) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t block = (n + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
        const std::size_t lo = t * block;
        const std::size_t hi = std::min(n, lo + block);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace

void GeoPoint::validate() const {
    if (!std::isfinite(lat) || !std::isfinite(lon))
        throw InvalidInput("non-finite coordinate");
    if (lat < -90.0 || lat > 90.0)
        throw InvalidInput("latitude out of range: " + std::to_string(lat));
    if (lon < -180.0 || lon > 180.0)
        throw InvalidInput("longitude out of range: " + std::to_string(lon));
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
    a.validate();
    b.validate();
    // |x - y| is bitwise symmetric, which makes the whole expression symmetric.
    const double dphi = std::abs(a.lat - b.lat) * kDegToRad;
    const double dlambda = std::abs(a.lon - b.lon) * kDegToRad;
    const double s1 = std::sin(dphi / 2.0);
    const double s2 = std::sin(dlambda / 2.0);
    const double h = s1 * s1 + std::cos(a.lat * kDegToRad) * std::cos(b.lat * kDegToRad) * s2 * s2;
    const double central = 2.0 * std::asin(std::sqrt(std::clamp(h, 0.0, 1.0)));
    return kEarthRadiusKm * central;
}

std::vector<GeoNeighborhood> geo_neighborhoods(std::span<const GeoPoint> points, double threshold_km,
                                               const NeighborhoodOptions& options) {
    if (!(threshold_km > 0.0) || !std::isfinite(threshold_km))
        throw InvalidInput("distance threshold must be positive and finite");
    if (points.empty()) throw InvalidInput("geo_neighborhoods needs at least one point");
    for (const auto& p : points) p.validate();

    const std::size_t n = points.size();

    // Great-circle distance is bounded below by R * |dphi|, so only points in
    // a latitude band can qualify. The band is padded to stay conservative.
    std::vector<std::size_t> by_lat(n);
    std::iota(by_lat.begin(), by_lat.end(), std::size_t{0});
    std::stable_sort(by_lat.begin(), by_lat.end(),
                     [&](std::size_t x, std::size_t y) { return points[x].lat < points[y].lat; });
    std::vector<double> sorted_lat(n);
    for (std::size_t r = 0; r < n; ++r) sorted_lat[r] = points[by_lat[r]].lat;
    const double band_deg = threshold_km / kEarthRadiusKm / kDegToRad * (1.0 + 1e-9) + 1e-9;

    std::vector<GeoNeighborhood> out(n);
    for_each_row(n, options.threads, [&](std::size_t i) {
        GeoNeighborhood& nb = out[i];
        nb.center = i;
        const double lat = points[i].lat;
        auto lo = std::lower_bound(sorted_lat.begin(), sorted_lat.end(), lat - band_deg);
        auto hi = std::upper_bound(sorted_lat.begin(), sorted_lat.end(), lat + band_deg);
        for (auto it = lo; it != hi; ++it) {
            const std::size_t j = by_lat[static_cast<std::size_t>(it - sorted_lat.begin())];
            if (j == i) continue;
            const double d = haversine_km(points[i], points[j]);
            if (d < threshold_km) nb.members.push_back({j, d});
        }
        std::sort(nb.members.begin(), nb.members.end(), [](const GeoMember& x, const GeoMember& y) {
            return x.distance_km != y.distance_km ? x.distance_km < y.distance_km : x.index < y.index;
        });
    });
    return out;
}

std::vector<std::vector<std::size_t>> geo_knn(std::span<const GeoPoint> points, std::size_t k) {
    if (k == 0) throw InvalidInput("k must be at least 1");
    const std::size_t n = points.size();
    if (n < 2) throw InvalidInput("geo_knn needs at least two points");
    for (const auto& p : points) p.validate();
    const std::size_t kk = std::min(k, n - 1);

    std::vector<std::vector<std::size_t>> out(n);
    std::vector<GeoMember> row;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) row.push_back({j, haversine_km(points[i], points[j])});
        auto less = [](const GeoMember& x, const GeoMember& y) {
            return x.distance_km != y.distance_km ? x.distance_km < y.distance_km : x.index < y.index;
        };
        std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(kk), row.end(), less);
        out[i].reserve(kk);
        for (std::size_t r = 0; r < kk; ++r) out[i].push_back(row[r].index);
    }
    return out;
}

} // namespace pdval
