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

// k-nearest similar house sampling: geographic candidates are ranked by a
// (weighted) Euclidean feature distance and the k most similar become the
// peers of each house. The selected peers are emitted as a directed graph
// (peer -> house) whose edges carry [geo_km, feature_distance, rank].

#include "pdval/geo.hpp"
#include "pdval/matrix.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pdval {

/// Per-feature multipliers of the squared differences. All-ones gives the
/// plain Euclidean distance.
struct FeatureWeights {
    std::vector<double> w;

    static FeatureWeights ones(std::size_t n) { return {std::vector<double>(n, 1.0)}; }

    /// Throws InvalidInput unless there are `n_features` finite, positive weights.
    void validate(std::size_t n_features) const;
};

enum class KnhsVariant { normal, random, geo };

std::string_view to_string(KnhsVariant v);
KnhsVariant parse_variant(std::string_view s);

double feature_distance(std::span<const double> a, std::span<const double> b, const FeatureWeights& weights);

struct RankedPeer {
    std::size_t index;
    double geo_km;
    double feature_distance;
};

struct KnhsSequence {
    std::size_t center = 0;
    /// Peers in rank order (rank 1 first).
    std::vector<RankedPeer> ranked;
    /// Houses arranged with `center` at position size/2; odd ranks fill the
    /// left side and even ranks the right side, moving outward.
    std::vector<std::size_t> ordered;
    /// Feature distance of each entry of `ordered` (0 for the center).
    std::vector<double> distances;
    /// No geographic candidates: the sequence holds only the center.
    bool degenerate = false;
};

/// Selects up to k peers of `center` among its geographic neighborhood.
/// `seed` only matters for the random variant; the stream is derived from
/// (seed, center) so results do not depend on evaluation order.
KnhsSequence knhs_select(std::size_t center, const GeoNeighborhood& neighborhood, const Matrix& features,
                         const FeatureWeights& weights, std::size_t k, KnhsVariant variant,
                         std::uint64_t seed = 0);

struct Edge {
    std::size_t src;
    std::size_t dst;
    friend bool operator==(const Edge&, const Edge&) = default;
};

/// Edge attribute layout.
inline constexpr std::size_t kEdgeAttrGeoKm = 0;
inline constexpr std::size_t kEdgeAttrFeatDist = 1;
inline constexpr std::size_t kEdgeAttrRank = 2;
inline constexpr std::size_t kEdgeAttrWidth = 3;

using EdgeAttr = std::array<double, kEdgeAttrWidth>;

struct SpatialGraph {
    std::size_t n_nodes = 0;
    std::vector<Edge> edges;
    std::vector<EdgeAttr> edge_attrs;

    std::vector<std::size_t> sources() const;
    std::vector<std::size_t> destinations() const;
    std::vector<std::size_t> in_degree() const;

    /// Throws InvalidInput on self-loops, duplicates, out-of-range ids or
    /// non-finite attributes.
    void validate() const;

    friend bool operator==(const SpatialGraph&, const SpatialGraph&) = default;
};

struct GraphOptions {
    double threshold_km = 0.0;
    std::size_t k = 8;
    KnhsVariant variant = KnhsVariant::normal;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct GraphBuildResult {
    SpatialGraph graph;
    /// Nodes whose geographic neighborhood was empty.
    std::vector<std::size_t> isolated;
};

/// Builds the peer graph. `features` rows align with `points`; edges are
/// ordered by destination, then rank.
GraphBuildResult build_graph(std::span<const GeoPoint> points, const Matrix& features, const FeatureWeights& weights,
                             const GraphOptions& options);

} // namespace pdval
