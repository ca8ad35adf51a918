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

#include "pdval/layers.hpp"

#include "pdval/errors.hpp"

#include <algorithm>
#include <cmath>

namespace pdval {

std::size_t embedding_size(std::size_t cardinality) {
    if (cardinality == 0) throw InvalidInput("embedding cardinality must be at least 1");
    return std::max<std::size_t>(1, std::min<std::size_t>(50, (cardinality + 1) / 2));
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t = Tensor::zeros({fan_in, fan_out});
    for (double& v : t.data) v = rng.uniform(-limit, limit);
    return t;
}

Var gcn_layer(Var h, const GraphIndex& graph, const GcnLayerParams& params) {
    const Tensor& H = h.value();
    if (H.rank() != 2 || H.rows() != graph.n_nodes)
        throw InvalidShape("gcn_layer: features " + shape_string(H.shape) + " for " + std::to_string(graph.n_nodes) +
                           " nodes");
    const Var self_term = matmul(h, params.w_self);
    const Var neigh_mean = segment_mean(gather_rows(h, graph.src), graph.dst, graph.n_nodes);
    const Var neigh_term = matmul(relu(neigh_mean), params.w_neigh);
    return add(self_term, neigh_term);
}

TransformerConvOutput transformer_conv(Var h, const GraphIndex& graph, Var edge_attrs,
                                       const TransformerConvParams& params, const TransformerConvOptions& options) {
    const Tensor& H = h.value();
    if (H.rank() != 2 || H.rows() != graph.n_nodes)
        throw InvalidShape("transformer_conv: features " + shape_string(H.shape) + " for " +
                           std::to_string(graph.n_nodes) + " nodes");
    const Tensor& EA = edge_attrs.value();
    if (EA.rank() != 2 || EA.rows() != graph.n_edges())
        throw InvalidShape("transformer_conv: edge attributes " + shape_string(EA.shape) + " for " +
                           std::to_string(graph.n_edges()) + " edges");
    const std::size_t heads = params.heads;
    const std::size_t width = params.w_query.value().cols();
    if (heads == 0 || width % heads != 0)
        throw InvalidShape("transformer_conv: attention width " + std::to_string(width) + " not divisible by " +
                           std::to_string(heads) + " heads");
    if (options.strict_isolated) {
        const auto deg = [&] {
            std::vector<std::size_t> d(graph.n_nodes, 0);
            for (std::size_t x : graph.dst) ++d[x];
            return d;
        }();
        for (std::size_t i = 0; i < deg.size(); ++i)
            if (deg[i] == 0) throw InvalidInput("transformer_conv: node " + std::to_string(i) + " has no in-edges");
    }
    const double d_head = static_cast<double>(width / heads);

    const Var q = matmul(h, params.w_query);
    const Var k = matmul(h, params.w_key);
    const Var v = matmul(h, params.w_value);
    const Var u = matmul(edge_attrs, params.w_edge);

    const Var q_dst = gather_rows(q, graph.dst);
    const Var k_src = add(gather_rows(k, graph.src), u);
    const Var v_src = add(gather_rows(v, graph.src), u);

    const Var scores = scale(head_dot(q_dst, k_src, heads), 1.0 / std::sqrt(d_head));
    const Var alpha = segment_softmax(scores, graph.dst, graph.n_nodes);
    const Var agg = segment_sum(head_scale(alpha, v_src), graph.dst, graph.n_nodes);
    return {matmul(concat_rows(h, agg), params.w_aggr), alpha};
}

Var dense(Var h, Var w, Var b, Activation activation) {
    const Var y = add_bias(matmul(h, w), b);
    return activation == Activation::relu ? relu(y) : y;
}

} // namespace pdval
