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

#include "pdval/autodiff.hpp"
#include "pdval/knhs.hpp"
#include "pdval/rng.hpp"

#include <cstddef>
#include <vector>

namespace pdval {

/// min(50, floor((cardinality + 1) / 2)), at least 1.
std::size_t embedding_size(std::size_t cardinality);

struct EmbeddingSpec {
    std::size_t cardinality = 1;
    std::size_t dim = 1;

    static EmbeddingSpec for_cardinality(std::size_t cardinality) {
        return {cardinality, embedding_size(cardinality)};
    }
    friend bool operator==(const EmbeddingSpec&, const EmbeddingSpec&) = default;
};

/// Source/destination id lists of a graph, ready for gather/segment ops.
struct GraphIndex {
    std::size_t n_nodes = 0;
    std::vector<std::size_t> src;
    std::vector<std::size_t> dst;

    static GraphIndex from(const SpatialGraph& g) { return {g.n_nodes, g.sources(), g.destinations()}; }
    std::size_t n_edges() const noexcept { return src.size(); }
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

struct GcnLayerParams {
    Var w_self;  // [d_in x d_out]
    Var w_neigh; // [d_in x d_out]
};

/// out_i = h_i W_self + relu(mean_{j -> i} h_j) W_neigh. A node without
/// in-edges aggregates to the zero vector, so out_i = h_i W_self.
Var gcn_layer(Var h, const GraphIndex& graph, const GcnLayerParams& params);

/// Per-head projections are stored side by side: columns
/// [k*d_head, (k+1)*d_head) of w_query/w_key/w_value/w_edge belong to head k.
struct TransformerConvParams {
    Var w_query; // [d_in x heads*d_head]
    Var w_key;   // [d_in x heads*d_head]
    Var w_value; // [d_in x heads*d_head]
    Var w_edge;  // [d_edge x heads*d_head]
    Var w_aggr;  // [(d_in + heads*d_head) x d_out]
    std::size_t heads = 1;
};

struct TransformerConvOptions {
    /// Raise instead of aggregating to zero when a node has no in-edges.
    bool strict_isolated = false;
};

struct TransformerConvOutput {
    Var out;       // [n x d_out]
    Var attention; // [E x heads], softmax-normalised per destination
};

/// Attention message passing with edge attributes:
///   score(i,j) = Q_i . (K_j + U_ij) / sqrt(d_head)
///   alpha      = softmax of the scores over the in-edges of i (per head)
///   agg_i      = sum_j alpha(i,j) (V_j + U_ij), heads concatenated
///   out_i      = [h_i, agg_i] W_aggr
/// `edge_attrs` [E x d_edge] is consumed as-is and never modified.
TransformerConvOutput transformer_conv(Var h, const GraphIndex& graph, Var edge_attrs,
                                       const TransformerConvParams& params,
                                       const TransformerConvOptions& options = {});

enum class Activation { identity, relu };

/// h W + b, optionally followed by relu.
Var dense(Var h, Var w, Var b, Activation activation);

} // namespace pdval
