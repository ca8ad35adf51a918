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
#include "pdval/layers.hpp"
#include "pdval/matrix.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pdval {

enum class ModelKind { pd_gcn, pd_tgcn, linreg };

std::string_view to_string(ModelKind k);
ModelKind parse_model_kind(std::string_view s);

struct ModelSpec {
    ModelKind kind = ModelKind::pd_tgcn;
    std::size_t continuous_dim = 0;
    std::vector<EmbeddingSpec> embedding_specs;
    std::size_t hidden_dim = 32;
    std::size_t heads = 4;
    std::size_t d_head = 16;
    std::size_t edge_dim = kEdgeAttrWidth;
    std::uint64_t seed = 0;

    /// Width after concatenating continuous features and embeddings.
    std::size_t input_dim() const;
    void validate() const;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Everything a graph model consumes for one forward pass.
struct ModelInputs {
    Tensor continuous;                                 // [n x continuous_dim], already scaled
    std::vector<std::vector<std::size_t>> categorical; // one id column per embedding spec
    GraphIndex graph;
    Tensor edge_attrs; // [E x edge_dim], already scaled

    std::size_t n_nodes() const noexcept { return graph.n_nodes; }
};

/// Seeded initial parameters: Glorot-uniform matrices and embedding tables,
/// zero biases. Names: emb.<i>, gcn<l>.w_self/w_neigh, dense.w/b,
/// tc<l>.w_query/w_key/w_value/w_edge/w_aggr, out.w/b.
ParamSet init_params(const ModelSpec& spec);

struct ForwardResult {
    Var prediction;             // [n x 1], scaled log-price space
    std::vector<Var> attention; // per conv layer, [E x heads]; empty for PD-GCN
};

/// Embeds categoricals and concatenates them after the continuous block.
Var embed_inputs(Tape& tape, const BoundParams& params, const ModelSpec& spec, const ModelInputs& inputs);

/// Two mean-aggregation GCN layers, a relu dense layer and a linear head.
ForwardResult forward_pd_gcn(Tape& tape, const BoundParams& params, const ModelSpec& spec, const ModelInputs& inputs);

/// Two transformer convolutions sharing the same edge attributes and a linear head.
ForwardResult forward_pd_tgcn(Tape& tape, const BoundParams& params, const ModelSpec& spec,
                              const ModelInputs& inputs);

/// Dispatches on spec.kind (graph kinds only).
ForwardResult forward(Tape& tape, const BoundParams& params, const ModelSpec& spec, const ModelInputs& inputs);

/// Convenience: runs a forward pass on a scratch tape and returns predictions.
std::vector<double> predict(const ParamSet& params, const ModelSpec& spec, const ModelInputs& inputs);

// ---- hedonic baseline --------------------------------------------------------

/// Ridge jitter added to the normal-equation diagonal.
inline constexpr double kLinregJitter = 1e-8;

/// Least squares with an intercept: returns [alpha_0, alpha_1..alpha_d] for
/// y ~ alpha_0 + X alpha. Requires n > d.
std::vector<double> fit_linreg(const Matrix& x, std::span<const double> y);

std::vector<double> predict_linreg(std::span<const double> coefficients, const Matrix& x);

} // namespace pdval
