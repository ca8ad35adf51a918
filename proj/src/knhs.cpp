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

#include "pdval/knhs.hpp"

#include "pdval/errors.hpp"
#include "pdval/rng.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

namespace pdval {

void FeatureWeights::validate(std::size_t n_features) const {
    if (w.size() != n_features)
        throw InvalidInput("feature weights have length " + std::to_string(w.size()) + ", expected " +
                           std::to_string(n_features));
    for (double x : w)
        if (!std::isfinite(x) || x <= 0.0) throw InvalidInput("feature weights must be finite and > 0");
}

std::string_view to_string(KnhsVariant v) {
    switch (v) {
    case KnhsVariant::normal: return "normal";
    case KnhsVariant::random: return "random";
    case KnhsVariant::geo: return "geo";
    }
    return "normal";
}

KnhsVariant parse_variant(std::string_view s) {
    if (s == "normal") return KnhsVariant::normal;
    if (s == "random") return KnhsVariant::random;
    if (s == "geo") return KnhsVariant::geo;
    throw InvalidInput("unknown knhs variant '" + std::string(s) + "' (expected normal, random or geo)");
}

double feature_distance(std::span<const double> a, std::span<const double> b, const FeatureWeights& weights) {
    if (a.size() != b.size()) throw InvalidInput("feature vectors differ in length");
    if (weights.w.size() != a.size()) throw InvalidInput("weight vector length does not match features");
    double acc = 0.0;
    for (std::size_t f = 0; f < a.size(); ++f) {
        const double d = a[f] - b[f];
        acc += weights.w[f] * (d * d);
    }
    return std::sqrt(acc);
}

namespace {

void arrange_center_out(KnhsSequence& seq) {
    // ranks 1,3,5,... go left (outward), 2,4,6,... go right.
    std::vector<std::size_t> left;
    std::vector<double> left_d;
    std::vector<std::size_t> right;
    std::vector<double> right_d;
    for (std::size_t r = 0; r < seq.ranked.size(); ++r) {
        if (r % 2 == 0) {
            left.push_back(seq.ranked[r].index);
            left_d.push_back(seq.ranked[r].feature_distance);
        } else {
            right.push_back(seq.ranked[r].index);
            right_d.push_back(seq.ranked[r].feature_distance);
        }
    }
    seq.ordered.assign(left.rbegin(), left.rend());
    seq.distances.assign(left_d.rbegin(), left_d.rend());
    seq.ordered.push_back(seq.center);
    seq.distances.push_back(0.0);
    seq.ordered.insert(seq.ordered.end(), right.begin(), right.end());
    seq.distances.insert(seq.distances.end(), right_d.begin(), right_d.end());
}

} // namespace

KnhsSequence knhs_select(std::size_t center, const GeoNeighborhood& neighborhood, const Matrix& features,
                         const FeatureWeights& weights, std::size_t k, KnhsVariant variant, std::uint64_t seed) {
    if (k == 0) throw InvalidInput("k must be at least 1");
    if (center >= features.rows) throw InvalidInput("center index out of range");
    weights.validate(features.cols);

    KnhsSequence seq;
    seq.center = center;

    std::vector<RankedPeer> candidates;
    candidates.reserve(neighborhood.members.size());
    for (const auto& m : neighborhood.members) {
        if (m.index >= features.rows) throw InvalidInput("neighbor index out of range");
        if (m.index == center) throw InvalidInput("neighborhood contains its own center");
        candidates.push_back({m.index, m.distance_km, feature_distance(features.row(center), features.row(m.index), weights)});
    }

    if (candidates.empty()) {
        seq.degenerate = true;
        arrange_center_out(seq);
        return seq;
    }

    const std::size_t take = std::min(k, candidates.size());
    switch (variant) {
    case KnhsVariant::normal: {
        auto less = [](const RankedPeer& x, const RankedPeer& y) {
            if (x.feature_distance != y.feature_distance) return x.feature_distance < y.feature_distance;
            if (x.geo_km != y.geo_km) return x.geo_km < y.geo_km;
            return x.index < y.index;
        };
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                          candidates.end(), less);
        candidates.resize(take);
        break;
    }
    case KnhsVariant::geo: {
        auto less = [](const RankedPeer& x, const RankedPeer& y) {
            if (x.geo_km != y.geo_km) return x.geo_km < y.geo_km;
            return x.index < y.index;
        };
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(take),
                          candidates.end(), less);
        candidates.resize(take);
        break;
    }
    case KnhsVariant::random: {
        // Partial Fisher-Yates: the first `take` slots are a uniform sample
        // without replacement, in draw order.
        Rng rng = Rng::derived(seed, center);
        for (std::size_t i = 0; i < take; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
            std::swap(candidates[i], candidates[j]);
        }
        candidates.resize(take);
        break;
    }
    }
    seq.ranked = std::move(candidates);
    arrange_center_out(seq);
    return seq;
}

std::vector<std::size_t> SpatialGraph::sources() const {
    std::vector<std::size_t> out(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) out[e] = edges[e].src;
    return out;
}

std::vector<std::size_t> SpatialGraph::destinations() const {
    std::vector<std::size_t> out(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) out[e] = edges[e].dst;
    return out;
}

std::vector<std::size_t> SpatialGraph::in_degree() const {
    std::vector<std::size_t> deg(n_nodes, 0);
    for (const auto& e : edges) ++deg[e.dst];
    return deg;
}

void SpatialGraph::validate() const {
    if (edge_attrs.size() != edges.size()) throw InvalidInput("edge_attrs and edges differ in length");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t e = 0; e < edges.size(); ++e) {
        const auto& ed = edges[e];
        if (ed.src >= n_nodes || ed.dst >= n_nodes) throw InvalidInput("edge endpoint out of range");
        if (ed.src == ed.dst) throw InvalidInput("self-loop on node " + std::to_string(ed.src));
        if (!seen.emplace(ed.src, ed.dst).second)
            throw InvalidInput("duplicate edge " + std::to_string(ed.src) + "->" + std::to_string(ed.dst));
        for (double a : edge_attrs[e])
            if (!std::isfinite(a)) throw InvalidInput("non-finite edge attribute");
    }
}

GraphBuildResult build_graph(std::span<const GeoPoint> points, const Matrix& features, const FeatureWeights& weights,
                             const GraphOptions& options) {
    if (points.empty()) throw InvalidInput("build_graph needs at least one record");
    if (features.rows != points.size()) throw InvalidInput("feature rows do not match the number of points");
    if (options.k == 0) throw InvalidInput("k must be at least 1");
    weights.validate(features.cols);

    const auto hoods = geo_neighborhoods(points, options.threshold_km, {options.threads});

    GraphBuildResult out;
    out.graph.n_nodes = points.size();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto seq = knhs_select(i, hoods[i], features, weights, options.k, options.variant, options.seed);
        if (seq.degenerate) out.isolated.push_back(i);
        for (std::size_t r = 0; r < seq.ranked.size(); ++r) {
            const auto& p = seq.ranked[r];
            out.graph.edges.push_back({p.index, i});
            out.graph.edge_attrs.push_back({p.geo_km, p.feature_distance, static_cast<double>(r + 1)});
        }
    }
    return out;
}

} // namespace pdval
